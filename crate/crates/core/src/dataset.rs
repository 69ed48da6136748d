//! Solved-task corpus: events, labels, record tables and gold texts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::events::{
    featurize, gold_text, object_records, oracle_label, to_record_table, CollisionEvent, ObjectRecord, FEATURES,
};
use crate::tasks::{instantiate, mix_seed, solve, Action, Task, TaskTemplate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskExample {
    pub id: String,
    pub task: Task,
    pub action: Action,
    pub goal_frame: usize,
    pub steps_run: usize,
    pub trials: usize,
    /// Objects of the solved scene, red ball included.
    pub objects: Vec<ObjectRecord>,
    pub events: Vec<CollisionEvent>,
    pub labels: Vec<bool>,
    pub features: Vec<[f64; FEATURES]>,
    pub records: Vec<String>,
    pub init_text: Vec<String>,
    pub sim_text: Vec<String>,
}

impl TaskExample {
    pub fn salient_events(&self) -> Vec<CollisionEvent> {
        self.events
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l)
            .map(|(e, _)| e.clone())
            .collect()
    }

    pub fn n_salient(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

pub fn task_id(template_id: usize, index: usize) -> String {
    format!("t{template_id}-{index:03}")
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Seeds {
    pub tasks: u64,
    pub solver: u64,
    pub text: u64,
    pub split: u64,
}

/// Instantiates, solves and annotates one task. `None` when the solver
/// budget runs out.
pub fn build_example(template: &TaskTemplate, index: usize, seeds: &Seeds, budget: usize) -> Result<Option<TaskExample>> {
    let task = instantiate(template, index, seeds.tasks)?;
    let Some(sol) = solve(&task, budget, seeds.solver)? else {
        return Ok(None);
    };
    let (events, labels) = oracle_label(&task, &sol)?;
    let objects = object_records(&sol.scene);
    let salient: Vec<CollisionEvent> = events
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l)
        .map(|(e, _)| e.clone())
        .collect();
    let records = to_record_table(&objects, &salient).to_lines().lines().map(String::from).collect();
    let text_seed = mix_seed(&[seeds.text, template.template_id as u64, index as u64]);
    let (init_text, sim_text) = gold_text(&objects, &salient, text_seed);
    Ok(Some(TaskExample {
        id: task_id(template.template_id, index),
        features: events.iter().map(featurize).collect(),
        action: sol.action,
        goal_frame: sol.goal_frame,
        steps_run: sol.rollout.steps_run,
        trials: sol.trials,
        task,
        objects,
        events,
        labels,
        records,
        init_text,
        sim_text,
    }))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffled 80/10/10 partition; each part keeps the input order.
pub fn split_ids(ids: &[String], seed: u64) -> Splits {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_valid = (n as f64 * 0.1).round() as usize;
    let mut part = vec![0u8; n];
    for (rank, &i) in order.iter().enumerate() {
        part[i] = if rank < n_train {
            0
        } else if rank < n_train + n_valid {
            1
        } else {
            2
        };
    }
    let pick = |p: u8| ids.iter().zip(&part).filter(|(_, &q)| q == p).map(|(id, _)| id.clone()).collect();
    Splits {
        train: pick(0),
        valid: pick(1),
        test: pick(2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub template_id: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub tasks: Vec<TaskExample>,
    pub excluded: Vec<Excluded>,
    pub splits: Splits,
}

impl DatasetBundle {
    pub fn get(&self, id: &str) -> Option<&TaskExample> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn split(&self, ids: &[String]) -> Vec<&TaskExample> {
        ids.iter().filter_map(|id| self.get(id)).collect()
    }

    /// Flattened event features and labels over the given tasks.
    pub fn event_rows(tasks: &[&TaskExample]) -> (Vec<[f64; FEATURES]>, Vec<bool>) {
        let x = tasks.iter().flat_map(|t| t.features.iter().copied()).collect();
        let y = tasks.iter().flat_map(|t| t.labels.iter().copied()).collect();
        (x, y)
    }

    pub fn solve_rate(&self) -> f64 {
        let n = self.tasks.len() + self.excluded.len();
        if n == 0 {
            0.0
        } else {
            self.tasks.len() as f64 / n as f64
        }
    }
}

/// Assembles a bundle from per-task results in template/index order.
pub fn assemble(results: Vec<((usize, usize), Option<TaskExample>)>, split_seed: u64) -> DatasetBundle {
    let mut tasks = Vec::new();
    let mut excluded = Vec::new();
    for ((template_id, index), r) in results {
        match r {
            Some(t) => tasks.push(t),
            None => excluded.push(Excluded { template_id, index }),
        }
    }
    let ids: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
    let splits = split_ids(&ids, split_seed);
    DatasetBundle { tasks, excluded, splits }
}
