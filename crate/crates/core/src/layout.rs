//! Tensor-product layout of the drive, system and environment spaces.
//!
//! Slots always appear in the global order D ⊗ S ⊗ E; the left factor is the
//! slowest-varying index of a composite basis label.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Drive,
    System,
    Environment,
}

impl Slot {
    pub fn label(self) -> char {
        match self {
            Slot::Drive => 'D',
            Slot::System => 'S',
            Slot::Environment => 'E',
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertLayout {
    slots: Vec<(Slot, usize)>,
}

impl HilbertLayout {
    pub fn new(slots: Vec<(Slot, usize)>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Layout("layout needs at least one slot".into()));
        }
        for (slot, dim) in &slots {
            if *dim == 0 {
                return Err(Error::Layout(format!("slot {slot} has dimension 0")));
            }
        }
        for pair in slots.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::Layout(format!(
                    "slots must be unique and ordered D, S, E; got {} before {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        Ok(Self { slots })
    }

    pub fn bipartite(drive: usize, system: usize) -> Result<Self> {
        Self::new(vec![(Slot::Drive, drive), (Slot::System, system)])
    }

    pub fn tripartite(drive: usize, system: usize, environment: usize) -> Result<Self> {
        Self::new(vec![
            (Slot::Drive, drive),
            (Slot::System, system),
            (Slot::Environment, environment),
        ])
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.slots.iter().map(|(s, _)| *s)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.slots.iter().map(|(_, d)| *d).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.slots.iter().map(|(_, d)| d).product()
    }

    pub fn contains(&self, slot: Slot) -> bool {
        self.position(slot).is_some()
    }

    pub fn position(&self, slot: Slot) -> Option<usize> {
        self.slots.iter().position(|(s, _)| *s == slot)
    }

    pub fn dim_of(&self, slot: Slot) -> Result<usize> {
        self.slots
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(_, d)| *d)
            .ok_or_else(|| Error::Layout(format!("slot {slot} is not part of the layout")))
    }

    /// Layout of the subsystems in `keep`, in global order.
    pub fn restricted(&self, keep: &[Slot]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Layout("at least one slot must be kept".into()));
        }
        for slot in keep {
            self.dim_of(*slot)?;
        }
        Self::new(
            self.slots
                .iter()
                .filter(|(s, _)| keep.contains(s))
                .copied()
                .collect(),
        )
    }

    pub fn has_environment(&self) -> bool {
        self.contains(Slot::Environment)
    }
}

impl fmt::Display for HilbertLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|(s, d)| format!("{s}:{d}"))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_order_and_duplicate_slots() {
        assert!(HilbertLayout::new(vec![(Slot::System, 2), (Slot::Drive, 3)]).is_err());
        assert!(HilbertLayout::new(vec![(Slot::System, 2), (Slot::System, 3)]).is_err());
        assert!(HilbertLayout::new(vec![(Slot::System, 0)]).is_err());
        assert!(HilbertLayout::new(vec![]).is_err());
    }

    #[test]
    fn total_dim_is_product() {
        let layout = HilbertLayout::tripartite(3, 2, 4).unwrap();
        assert_eq!(layout.total_dim(), 24);
        assert_eq!(layout.dims(), vec![3, 2, 4]);
        assert_eq!(layout.dim_of(Slot::Environment).unwrap(), 4);
        assert_eq!(layout.to_string(), "[D:3, S:2, E:4]");
    }

    #[test]
    fn restriction_keeps_global_order() {
        let layout = HilbertLayout::tripartite(3, 2, 4).unwrap();
        let se = layout
            .restricted(&[Slot::Environment, Slot::System])
            .unwrap();
        assert_eq!(se.dims(), vec![2, 4]);
        assert!(layout.restricted(&[]).is_err());
        let sd = HilbertLayout::bipartite(3, 2).unwrap();
        assert!(sd.restricted(&[Slot::Environment]).is_err());
    }
}
