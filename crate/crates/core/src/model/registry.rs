use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{TaskKey, Window};
use crate::nn::RegressionHead;
use crate::{Error, Result};

/// Creation-ordered head identifier. Never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeadId(pub u32);

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadEntry {
    pub id: HeadId,
    pub head: RegressionHead,
    /// Assigned tasks in assignment order.
    pub tasks: Vec<TaskKey>,
    /// Training windows of every assigned task, concatenated in the same order.
    pub train_windows: Vec<Window>,
}

/// Head id to head weights and the tasks the head serves.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<HeadEntry>", into = "Vec<HeadEntry>")]
pub struct HeadRegistry {
    entries: Vec<HeadEntry>,
    owner: HashMap<TaskKey, HeadId>,
}

impl PartialEq for HeadRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl TryFrom<Vec<HeadEntry>> for HeadRegistry {
    type Error = Error;

    fn try_from(entries: Vec<HeadEntry>) -> Result<Self> {
        let mut owner = HashMap::new();
        for e in &entries {
            for t in &e.tasks {
                owner.insert(t.clone(), e.id);
            }
        }
        let reg = HeadRegistry { entries, owner };
        reg.check_invariants()?;
        Ok(reg)
    }
}

impl From<HeadRegistry> for Vec<HeadEntry> {
    fn from(r: HeadRegistry) -> Self {
        r.entries
    }
}

impl HeadRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HeadEntry] {
        &self.entries
    }

    pub fn get(&self, id: HeadId) -> Option<&HeadEntry> {
        self.entries.get(id.0 as usize)
    }

    pub fn owner_of(&self, task: &TaskKey) -> Option<HeadId> {
        self.owner.get(task).copied()
    }

    pub fn head_for(&self, task: &TaskKey) -> Result<&RegressionHead> {
        let id = self
            .owner_of(task)
            .ok_or_else(|| Error::Lookup(task.to_string()))?;
        Ok(&self.entries[id.0 as usize].head)
    }

    pub fn task_count(&self) -> usize {
        self.owner.len()
    }

    /// Registers a new head owning a single task.
    pub fn insert_new(&mut self, head: RegressionHead, task: TaskKey, windows: &[Window]) -> Result<HeadId> {
        if self.owner.contains_key(&task) {
            return Err(Error::State(format!("task {task} is already assigned")));
        }
        let id = HeadId(self.entries.len() as u32);
        self.owner.insert(task.clone(), id);
        self.entries.push(HeadEntry {
            id,
            head,
            tasks: vec![task],
            train_windows: windows.to_vec(),
        });
        Ok(id)
    }

    /// Replaces the weights of `id` and assigns `task` to it.
    pub fn merge(&mut self, id: HeadId, head: RegressionHead, task: TaskKey, windows: &[Window]) -> Result<()> {
        if self.owner.contains_key(&task) {
            return Err(Error::State(format!("task {task} is already assigned")));
        }
        let entry = self
            .entries
            .get_mut(id.0 as usize)
            .ok_or_else(|| Error::State(format!("no head {id}")))?;
        entry.head = head;
        entry.tasks.push(task.clone());
        entry.train_windows.extend_from_slice(windows);
        self.owner.insert(task, id);
        Ok(())
    }

    pub fn tasks_per_head(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.tasks.len()).collect()
    }

    /// SHA-256 of every head's parameters, in id order.
    pub fn digests(&self) -> Vec<String> {
        self.entries.iter().map(|e| head_digest(&e.head)).collect()
    }

    /// Ids are `0..len`, every head owns at least one task and every task is
    /// owned by exactly one head.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.id != HeadId(i as u32) {
                return Err(Error::State(format!("head at position {i} has id {}", e.id)));
            }
            if e.tasks.is_empty() {
                return Err(Error::State(format!("head {} has no tasks", e.id)));
            }
            for t in &e.tasks {
                if let Some(prev) = seen.insert(t, e.id) {
                    return Err(Error::State(format!("task {t} owned by {prev} and {}", e.id)));
                }
                if self.owner.get(t) != Some(&e.id) {
                    return Err(Error::State(format!("owner index out of sync for {t}")));
                }
            }
        }
        if seen.len() != self.owner.len() {
            return Err(Error::State("owner index lists unknown tasks".into()));
        }
        Ok(())
    }
}

pub fn head_digest(head: &RegressionHead) -> String {
    let mut hasher = Sha256::new();
    for v in head.flat() {
        hasher.update(v.to_bits().to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
