use std::collections::HashMap;

use super::{Role, SharingPlan, SlotId};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::{Scalar, Tensor};

/// One storage cell: the tensor actually holding the weights of a sharing
/// group, plus the gradient buffer that sums contributions from every
/// slot aliased to it.
#[derive(Debug, Clone)]
pub struct ParamCell<T: Scalar> {
    /// Name of the group's first (canonical-order) slot.
    pub name: String,
    pub role: Role,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// A resolved sharing plan: cells in canonical allocation order plus the
/// slot→cell aliasing map.
#[derive(Debug, Clone)]
pub struct ParameterTable<T: Scalar> {
    config: ModelConfig,
    plan: SharingPlan,
    cells: Vec<ParamCell<T>>,
    slot_map: HashMap<SlotId, usize>,
    groups: Vec<Vec<SlotId>>,
}

impl<T: Scalar> ParameterTable<T> {
    /// Allocate storage for a plan. One zeroed cell per group; call
    /// `training::init_parameters` to fill it, or a checkpoint load.
    pub fn resolve(config: &ModelConfig, plan: &SharingPlan) -> Result<ParameterTable<T>> {
        config.validate()?;
        let groups = plan.groups(config)?;
        let mut cells = Vec::with_capacity(groups.len());
        let mut slot_map = HashMap::new();
        for (gi, group) in groups.iter().enumerate() {
            let shape = group[0].shape(config);
            for slot in group {
                if slot.shape(config) != shape {
                    return Err(Error::InvalidPlan(format!(
                        "shape conflict: {} has {:?}, group leader {} has {:?}",
                        slot,
                        slot.shape(config),
                        group[0],
                        shape
                    )));
                }
                slot_map.insert(slot.clone(), gi);
            }
            cells.push(ParamCell {
                name: group[0].to_string(),
                role: group[0].role,
                value: Tensor::zeros(shape.clone()),
                grad: Tensor::zeros(shape),
            });
        }
        Ok(ParameterTable { config: config.clone(), plan: plan.clone(), cells, slot_map, groups })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &SharingPlan {
        &self.plan
    }

    pub fn targets(&self) -> &[String] {
        &self.plan.targets
    }

    pub fn cells(&self) -> &[ParamCell<T>] {
        &self.cells
    }

    pub fn cell_value_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.cells[idx].value
    }

    pub fn groups(&self) -> &[Vec<SlotId>] {
        &self.groups
    }

    /// Cell index behind a slot. Unknown targets get their own error so
    /// callers can distinguish "no such language" from a genuinely
    /// malformed slot.
    pub fn cell_index(&self, slot: &SlotId) -> Result<usize> {
        if let Some(&i) = self.slot_map.get(slot) {
            return Ok(i);
        }
        if !self.plan.targets.contains(&slot.target) {
            return Err(Error::UnknownTarget(slot.target.clone()));
        }
        Err(Error::InvalidPlan(format!("slot {slot} not present in the resolved table")))
    }

    pub fn slot_value(&self, slot: &SlotId) -> Result<&Tensor<T>> {
        Ok(&self.cells[self.cell_index(slot)?].value)
    }

    /// Write through a slot; every other slot in its group observes it.
    pub fn slot_value_mut(&mut self, slot: &SlotId) -> Result<&mut Tensor<T>> {
        let i = self.cell_index(slot)?;
        Ok(&mut self.cells[i].value)
    }

    /// Add per-cell gradient contributions (from `Graph::param_grads`).
    pub fn accumulate_grads<'a>(&mut self, grads: impl Iterator<Item = (usize, &'a [T])>) {
        for (cell, g) in grads {
            let dst = self.cells[cell].grad.data_mut();
            for (a, &b) in dst.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for c in &mut self.cells {
            for v in c.grad.data_mut() {
                *v = T::zero();
            }
        }
    }

    /// Structural report: partition validity, shape agreement, and bitwise
    /// equality of all slots within each group. Aliasing is by storage so
    /// the equality check cannot fail through the public API — the report
    /// documents that rather than assuming it. Empty report = healthy.
    pub fn verify(&self) -> Vec<String> {
        let mut findings = self.plan.validate(&self.config);
        let all = super::enumerate_slots(&self.config, &self.plan.targets);
        for slot in &all {
            match self.slot_map.get(slot) {
                None => findings.push(format!("slot {slot} is not mapped to any cell")),
                Some(&i) => {
                    let cell = &self.cells[i];
                    if slot.shape(&self.config) != cell.value.shape() {
                        findings.push(format!(
                            "slot {} maps to cell '{}' of mismatched shape {:?}",
                            slot,
                            cell.name,
                            cell.value.shape()
                        ));
                    }
                }
            }
        }
        if self.slot_map.len() != all.len() {
            findings.push(format!(
                "table maps {} slots but the configuration defines {}",
                self.slot_map.len(),
                all.len()
            ));
        }
        for group in &self.groups {
            let first = match self.slot_map.get(&group[0]) {
                Some(&i) => &self.cells[i].value,
                None => continue,
            };
            for slot in group {
                let v = match self.slot_map.get(slot) {
                    Some(&i) => &self.cells[i].value,
                    None => continue,
                };
                if v != first {
                    findings.push(format!(
                        "group of {}: slot {} diverged from its group",
                        group[0], slot
                    ));
                }
            }
        }
        findings
    }

    /// Parameter counts of this resolved table (delegates to the pure
    /// arithmetic used by `count_parameters`).
    pub fn counts(&self) -> ParamCounts {
        counts_from_groups(&self.config, &self.groups)
    }
}

#[derive(Debug, Clone)]
pub struct GroupCount {
    pub name: String,
    /// Scalar parameters in the cell (counted once per group).
    pub elems: u64,
    /// How many slots alias the cell.
    pub slots: usize,
    pub is_weight_matrix: bool,
}

#[derive(Debug, Clone)]
pub struct ParamCounts {
    /// Every parameter including biases and layer-norm gains/biases.
    pub total: u64,
    /// Weight matrices only (embedding, attention projections, FFN mats).
    pub weights_only: u64,
    pub per_group: Vec<GroupCount>,
}

impl ParamCounts {
    /// Rounded to the nearest million, the form used for model-size tables.
    pub fn total_millions(&self) -> u64 {
        (self.total + 500_000) / 1_000_000
    }

    pub fn weights_millions(&self) -> u64 {
        (self.weights_only + 500_000) / 1_000_000
    }
}

/// Count parameters for a plan without allocating any tensors: pure
/// shape arithmetic, each shared group counted once.
pub fn count_parameters(config: &ModelConfig, plan: &SharingPlan) -> Result<ParamCounts> {
    config.validate()?;
    let groups = plan.groups(config)?;
    Ok(counts_from_groups(config, &groups))
}

fn counts_from_groups(config: &ModelConfig, groups: &[Vec<SlotId>]) -> ParamCounts {
    let mut counts = ParamCounts { total: 0, weights_only: 0, per_group: Vec::with_capacity(groups.len()) };
    for group in groups {
        let slot = &group[0];
        let elems: u64 = slot.shape(config).iter().map(|&e| e as u64).product();
        let is_weight = slot.role.is_weight_matrix();
        counts.total += elems;
        if is_weight {
            counts.weights_only += elems;
        }
        counts.per_group.push(GroupCount {
            name: slot.to_string(),
            elems,
            slots: group.len(),
            is_weight_matrix: is_weight,
        });
    }
    counts
}
