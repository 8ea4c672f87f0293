use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Which network component a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Extractor,
    Head,
    Classifier,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Extractor, Partition::Head, Partition::Classifier];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Extractor => "extractor",
            Partition::Head => "head",
            Partition::Classifier => "classifier",
        }
    }

    /// Partition implied by a parameter name's leading component.
    pub fn from_name(name: &str) -> Option<Self> {
        match name.split('.').next()? {
            "extractor" => Some(Partition::Extractor),
            "head" => Some(Partition::Head),
            "classifier" => Some(Partition::Classifier),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trainable weights receive optimizer updates; buffers (batch-norm running
/// statistics, stored prototypes) are state that is saved but never stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Trainable,
    Buffer,
}

impl EntryKind {
    /// Buffers are recognised by name so checkpoints need not store the kind.
    pub fn from_name(name: &str) -> Self {
        let last = name.rsplit('.').next().unwrap_or(name);
        if matches!(last, "running_mean" | "running_var" | "prototypes") {
            EntryKind::Buffer
        } else {
            EntryKind::Trainable
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    partition: Partition,
    kind: EntryKind,
    pub tensor: Tensor<T>,
}

impl<T> Entry<T> {
    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn kind(&self) -> EntryKind {
        self.kind
    }
}

/// Named tensors tagged by partition, with a per-partition freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    entries: BTreeMap<String, Entry<T>>,
    frozen: [bool; 3],
}

impl<T: Real> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            frozen: [false; 3],
        }
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        partition: Partition,
        kind: EntryKind,
        tensor: Tensor<T>,
    ) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Parameter(format!("duplicate parameter {name:?}")));
        }
        self.entries.insert(
            name,
            Entry {
                partition,
                kind,
                tensor,
            },
        );
        Ok(())
    }

    /// Inserts using the partition and kind implied by the name.
    pub fn insert_named(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        let partition = Partition::from_name(&name)
            .ok_or_else(|| Error::Parameter(format!("{name:?} has no partition prefix")))?;
        let kind = EntryKind::from_name(&name);
        self.insert(name, partition, kind, tensor)
    }

    /// Replaces the values of an existing entry, keeping its tags.
    pub fn replace(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let entry = self.entry_mut(name)?;
        if entry.tensor.shape() != tensor.shape() {
            return Err(Error::Parameter(format!(
                "{name}: shape {:?} cannot replace {:?}",
                tensor.shape(),
                entry.tensor.shape()
            )));
        }
        entry.tensor = tensor;
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.entries.remove(name).map(|e| e.tensor)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| Error::Parameter(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entry_mut(name).map(|e| &mut e.tensor)
    }

    fn entry_mut(&mut self, name: &str) -> Result<&mut Entry<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Parameter(format!("missing parameter {name:?}")))
    }

    pub fn entry(&self, name: &str) -> Option<&Entry<T>> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Entry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Entry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn freeze(&mut self, partition: Partition) {
        self.frozen[partition.index()] = true;
    }

    pub fn unfreeze(&mut self, partition: Partition) {
        self.frozen[partition.index()] = false;
    }

    pub fn is_frozen(&self, partition: Partition) -> bool {
        self.frozen[partition.index()]
    }

    /// Adds `delta` to the named entry's gradient buffer.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor<T>) -> Result<()> {
        let entry = self.entry_mut(name)?;
        if entry.tensor.shape() != delta.shape() {
            return Err(Error::dimension(
                "accumulate_grad",
                format!(
                    "{name}: gradient shape {:?} vs parameter {:?}",
                    delta.shape(),
                    entry.tensor.shape()
                ),
            ));
        }
        entry.tensor.accumulate_grad(delta.values())
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.tensor.clear_grad();
        }
    }

    /// Number of trainable scalars in a partition.
    pub fn trainable_count(&self, partition: Partition) -> usize {
        self.entries
            .values()
            .filter(|e| e.partition == partition && e.kind == EntryKind::Trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Order-stable FNV-1a digest over names and value bits of a partition.
    pub fn checksum(&self, partition: Partition) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, e) in &self.entries {
            if e.partition != partition {
                continue;
            }
            eat(name.as_bytes());
            for v in e.tensor.values() {
                eat(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        Entry {
                            partition: e.partition,
                            kind: e.kind,
                            tensor: e.tensor.cast(),
                        },
                    )
                })
                .collect(),
            frozen: self.frozen,
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, e) in &self.entries {
            e.tensor.check_finite(name)?;
        }
        Ok(())
    }
}
