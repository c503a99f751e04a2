//! Corpus and question generation, and the noisy top-k retriever.

use std::collections::HashMap;

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream_rng, SimError};
use crate::config::EnvParams;

/// The validation split always holds exactly this many questions.
pub const VAL_QUESTIONS: usize = 80;

/// Entity names at chain position `p` are spelled from the `p`-th alphabet. The
/// alphabets are disjoint, so an answer from the wrong chain position shares no
/// characters with the gold and earns exactly zero character-F1 — which keeps the
/// all-failed group condition decidable in the simulator.
const POSITION_ALPHABETS: [&[u8]; 5] = [b"bcdf", b"ghjk", b"lmnp", b"qrst", b"vwxz"];

/// One knowledge triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// A deterministic set of facts with unique (subject, relation) keys.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    facts: Vec<Fact>,
    index: HashMap<(String, String), usize>,
    pub seed: u64,
}

impl SyntheticCorpus {
    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// The object linked from (subject, relation), if the link exists.
    pub fn object_of(&self, subject: &str, relation: &str) -> Option<&str> {
        self.index
            .get(&(subject.to_string(), relation.to_string()))
            .map(|&i| self.facts[i].object.as_str())
    }

    fn insert(&mut self, fact: Fact) {
        let key = (fact.subject.clone(), fact.relation.clone());
        debug_assert!(!self.index.contains_key(&key), "duplicate (subject, relation)");
        self.index.insert(key, self.facts.len());
        self.facts.push(fact);
    }
}

/// A multi-hop question: start at an entity, follow a relation chain, name the
/// entity at the end. `answerable` is ground truth: true exactly when every link
/// of the chain exists in the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub hops: usize,
    pub start_entity: String,
    pub relation_chain: Vec<String>,
    /// The chain-tail entity name; for unanswerable questions it is unreachable.
    pub gold: String,
    pub answerable: bool,
    /// Chain position of the knocked-out link, when unanswerable.
    pub missing_at: Option<usize>,
    /// Retrieval displacement probability for this question's lookups.
    pub noise_rate: f64,
}

/// Train/val/test question splits.
#[derive(Debug, Clone)]
pub struct QuestionSets {
    pub train: Vec<Question>,
    pub val: Vec<Question>,
    pub test: Vec<Question>,
}

/// Spell entity number `index` using the alphabet of its chain position.
fn entity_name(position: usize, index: usize) -> String {
    let alphabet = POSITION_ALPHABETS[position];
    let base = alphabet.len();
    // Fixed width keeps names unique and length-uniform.
    let width = 8;
    let mut chars = vec![alphabet[0]; width];
    let mut rest = index;
    for slot in (0..width).rev() {
        chars[slot] = alphabet[rest % base];
        rest /= base;
        if rest == 0 {
            break;
        }
    }
    String::from_utf8(chars).expect("alphabets are ascii")
}

struct Generator<'a> {
    params: &'a EnvParams,
    relations: Vec<String>,
    next_entity: usize,
}

impl Generator<'_> {
    fn fresh_entity(&mut self, position: usize) -> Result<String, SimError> {
        if self.next_entity >= self.params.n_entities {
            return Err(SimError::InsufficientEntities {
                needed: self.next_entity + 1,
                available: self.params.n_entities,
            });
        }
        let name = entity_name(position, self.next_entity);
        self.next_entity += 1;
        Ok(name)
    }

    fn question(
        &mut self,
        corpus: &mut SyntheticCorpus,
        id: String,
        rng: &mut impl Rng,
    ) -> Result<Question, SimError> {
        let hops = rng.gen_range(self.params.hops_min..=self.params.hops_max);
        let unanswerable = rng.gen_bool(self.params.missing_link_rate);
        let missing_at = unanswerable.then(|| rng.gen_range(0..hops));
        let noise_rate = if rng.gen_bool(self.params.hard_question_rate) {
            self.params.hard_noise_rate
        } else {
            self.params.noise_rate
        };

        let mut entities = Vec::with_capacity(hops + 1);
        for position in 0..=hops {
            entities.push(self.fresh_entity(position)?);
        }
        let relation_chain: Vec<String> = (0..hops)
            .map(|_| self.relations.choose(rng).expect("relations non-empty").clone())
            .collect();
        for (position, relation) in relation_chain.iter().enumerate() {
            if missing_at == Some(position) {
                continue;
            }
            corpus.insert(Fact {
                subject: entities[position].clone(),
                relation: relation.clone(),
                object: entities[position + 1].clone(),
            });
        }
        Ok(Question {
            id,
            hops,
            start_entity: entities[0].clone(),
            gold: entities[hops].clone(),
            relation_chain,
            answerable: !unanswerable,
            missing_at,
            noise_rate,
        })
    }
}

/// Generate the corpus and the train/val/test question splits. Deterministic given
/// the seed and parameters; the validation split always has [`VAL_QUESTIONS`]
/// entries.
pub fn generate_corpus(
    params: &EnvParams,
    seed: u64,
) -> Result<(SyntheticCorpus, QuestionSets), SimError> {
    let mut corpus = SyntheticCorpus {
        facts: Vec::new(),
        index: HashMap::new(),
        seed,
    };
    let mut generator = Generator {
        params,
        relations: (0..params.n_relations).map(|i| format!("rel{i:02}")).collect(),
        next_entity: 0,
    };

    let split = |corpus: &mut SyntheticCorpus,
                     prefix: &str,
                     count: usize,
                     generator: &mut Generator|
     -> Result<Vec<Question>, SimError> {
        let mut rng = stream_rng(seed, "corpus", prefix, 0, 0);
        (0..count)
            .map(|i| generator.question(corpus, format!("{prefix}-{i:05}"), &mut rng))
            .collect()
    };

    let train = split(&mut corpus, "train", params.train_questions, &mut generator)?;
    let val = split(&mut corpus, "val", VAL_QUESTIONS, &mut generator)?;
    let test = split(&mut corpus, "test", params.test_questions, &mut generator)?;

    Ok((corpus, QuestionSets { train, val, test }))
}

/// One retrieved result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Snippet {
    fn from_fact(fact: &Fact) -> Self {
        Snippet {
            subject: fact.subject.clone(),
            relation: fact.relation.clone(),
            object: fact.object.clone(),
        }
    }

    pub fn text(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }
}

/// Top-k retrieval for (entity, relation). When the link exists its triple appears
/// in the results, except that with probability `noise_rate` it is displaced out of
/// the top-k; the rest of the list is distractor triples sampled from the corpus.
pub fn retrieve(
    corpus: &SyntheticCorpus,
    entity: &str,
    relation: &str,
    top_k: usize,
    noise_rate: f64,
    rng: &mut impl Rng,
) -> Vec<Snippet> {
    let true_idx = corpus
        .index
        .get(&(entity.to_string(), relation.to_string()))
        .copied();
    let include_true = true_idx.is_some() && !rng.gen_bool(noise_rate);

    let distractor_count = top_k - usize::from(include_true);
    let mut results = Vec::with_capacity(top_k);
    if corpus.facts.is_empty() {
        return results;
    }
    let mut picked = 0;
    let mut guard = 0;
    while picked < distractor_count && guard < distractor_count * 20 + 20 {
        guard += 1;
        let idx = rng.gen_range(0..corpus.facts.len());
        if Some(idx) == true_idx {
            continue;
        }
        results.push(Snippet::from_fact(&corpus.facts[idx]));
        picked += 1;
    }
    if include_true {
        let slot = rng.gen_range(0..=results.len());
        results.insert(slot, Snippet::from_fact(&corpus.facts[true_idx.unwrap()]));
    }
    results
}
