//! Seeded planted-fact world for offline, LLM-free runs.
//!
//! Each task asks for two attributes of one entity. The two answers live in
//! two different gold documents; the task's remaining documents are
//! distractors carrying facts about other attributes. All documents of a
//! task share its filter key, so retrieval stays within the task.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::{QAExample, Split, TaskKind};
use crate::retrieval::SourceRecord;

const KEYS: &[&str] = &[
    "color", "city", "metal", "animal", "river", "planet", "fruit", "tool", "gem", "tree", "bird", "dance", "spice",
    "fabric", "engine", "island",
];

const VALUES: &[&str] = &[
    "amber", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper", "kestrel", "lagoon",
    "marble", "nectar", "onyx", "pewter", "quartz", "russet", "saffron", "tundra", "umber", "violet", "willow",
    "xenon", "yarrow", "zephyr", "cobalt", "sienna", "topaz", "mistral",
];

const FILLER: &[&str] = &[
    "the", "record", "notes", "that", "archive", "entry", "mentions", "several", "details", "about", "registry",
    "according", "to", "local", "sources", "catalogue", "survey", "report", "listed", "under", "section", "with",
    "remarks", "observed", "during", "annual", "review", "filed", "clerk", "ledger",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimWorldConfig {
    pub train_tasks: usize,
    pub test_tasks: usize,
    pub distractors_per_task: usize,
    pub filler_words: usize,
    #[serde(with = "crate::config::seed_serde")]
    pub seed: u64,
}

impl Default for SimWorldConfig {
    fn default() -> Self {
        Self {
            train_tasks: 100,
            test_tasks: 200,
            distractors_per_task: 8,
            filler_words: 12,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub examples: Vec<QAExample>,
    /// One record per document, train and test tasks pooled.
    pub records: Vec<SourceRecord>,
}

impl SimWorld {
    pub fn split(&self, split: Split) -> Vec<QAExample> {
        self.examples.iter().filter(|e| e.split == split).cloned().collect()
    }
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| *FILLER.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate_world(config: &SimWorldConfig) -> SimWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut examples = Vec::new();
    let mut records = Vec::new();
    let total = config.train_tasks + config.test_tasks;
    for t in 0..total {
        let split = if t < config.train_tasks { Split::Train } else { Split::Test };
        let task_id = format!("{}-{t:04}", if split == Split::Train { "train" } else { "test" });
        let entity = format!("entity{t}");
        let mut keys: Vec<&str> = KEYS.to_vec();
        keys.shuffle(&mut rng);
        let (asked, others) = keys.split_at(2);
        let values: Vec<&str> = (0..2).map(|_| *VALUES.choose(&mut rng).expect("non-empty")).collect();

        let mut docs: Vec<String> = asked
            .iter()
            .zip(&values)
            .map(|(k, v)| {
                let f = filler(&mut rng, config.filler_words);
                format!("{entity} {f} fact:{k}={v}")
            })
            .collect();
        for d in 0..config.distractors_per_task {
            let k = others[d % others.len()];
            let v = VALUES.choose(&mut rng).expect("non-empty");
            let f = filler(&mut rng, config.filler_words);
            docs.push(format!("{entity} {f} fact:{k}={v}"));
        }
        // document order must not reveal which ones are gold
        docs.shuffle(&mut rng);
        for (i, text) in docs.into_iter().enumerate() {
            records.push(SourceRecord {
                source_id: format!("{task_id}/doc{i:02}"),
                filter_key: Some(task_id.clone()),
                text,
            });
        }
        let noise: u32 = rng.gen_range(0..1000);
        examples.push(QAExample {
            query_id: task_id.clone(),
            query: format!("ask:{}+{} what are the {} and {} of {entity} (ref {noise})", asked[0], asked[1], asked[0], asked[1]),
            gold_answers: vec![format!("{} {}", values[0], values[1])],
            task: TaskKind::SimulatedFact,
            filter_key: Some(task_id),
            split,
        });
    }
    SimWorld { examples, records }
}
