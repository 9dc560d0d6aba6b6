use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use super::{enumerate_slots, Component, Role, SlotId, Sublayer};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Built-in sharing strategies. Ordered here from nothing shared to
/// everything shared; every strategy except NONE and EMBED also shares the
/// embedding and the whole encoder, so the names describe which *decoder*
/// parameters join the shared set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    Embed,
    EmbedEnc,
    Ffn,
    SelfAttn,
    EncDecAttn,
    KvBoth,
    KqBoth,
    AttnBoth,
    Full,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::None,
        Strategy::Embed,
        Strategy::EmbedEnc,
        Strategy::Ffn,
        Strategy::SelfAttn,
        Strategy::EncDecAttn,
        Strategy::KvBoth,
        Strategy::KqBoth,
        Strategy::AttnBoth,
        Strategy::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "NONE",
            Strategy::Embed => "EMBED",
            Strategy::EmbedEnc => "EMBED_ENC",
            Strategy::Ffn => "FFN",
            Strategy::SelfAttn => "SELF_ATTN",
            Strategy::EncDecAttn => "ENCDEC_ATTN",
            Strategy::KvBoth => "KV_BOTH",
            Strategy::KqBoth => "KQ_BOTH",
            Strategy::AttnBoth => "ATTN_BOTH",
            Strategy::Full => "FULL",
        }
    }

    pub fn from_name(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidPlan(format!("unknown strategy '{s}'")))
    }

    /// Does this strategy alias `slot` across targets?
    fn shares(self, slot: &SlotId) -> bool {
        match self {
            Strategy::None => false,
            Strategy::Embed => slot.component == Component::Embedding,
            Strategy::EmbedEnc => {
                matches!(slot.component, Component::Embedding | Component::Encoder)
            }
            // All remaining strategies assume shared embedding + encoder and
            // differ in which decoder parameters join.
            _ => match slot.component {
                Component::Embedding | Component::Encoder => true,
                Component::Decoder => self.shares_decoder_slot(slot),
            },
        }
    }

    fn shares_decoder_slot(self, slot: &SlotId) -> bool {
        let attn = matches!(slot.sublayer, Some(Sublayer::SelfAttn) | Some(Sublayer::EncDecAttn));
        match self {
            Strategy::Full => true,
            Strategy::Ffn => slot.sublayer == Some(Sublayer::Ffn),
            Strategy::SelfAttn => slot.sublayer == Some(Sublayer::SelfAttn),
            Strategy::EncDecAttn => slot.sublayer == Some(Sublayer::EncDecAttn),
            // KQ/KV share only the named projection matrices of both
            // attention sublayers; the sublayers' norms stay per-target
            // because their V/F mates stay per-target.
            Strategy::KvBoth => attn && matches!(slot.role, Role::K | Role::V),
            Strategy::KqBoth => attn && matches!(slot.role, Role::K | Role::Q),
            Strategy::AttnBoth => attn,
            Strategy::None | Strategy::Embed | Strategy::EmbedEnc => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanKind {
    Builtin(Strategy),
    /// Hand-written groups; slots not mentioned form singleton groups.
    Explicit(Vec<Vec<SlotId>>),
}

/// A partition of all parameter slots into groups that alias one storage
/// cell each. For built-in strategies the groups are derived on demand from
/// the model configuration (they depend on the layer count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingPlan {
    pub kind: PlanKind,
    pub targets: Vec<String>,
}

impl SharingPlan {
    pub fn from_strategy(strategy: Strategy, targets: &[String]) -> Result<SharingPlan> {
        validate_targets(targets)?;
        Ok(SharingPlan { kind: PlanKind::Builtin(strategy), targets: targets.to_vec() })
    }

    pub fn explicit(groups: Vec<Vec<SlotId>>, targets: &[String]) -> Result<SharingPlan> {
        validate_targets(targets)?;
        Ok(SharingPlan { kind: PlanKind::Explicit(groups), targets: targets.to_vec() })
    }

    pub fn strategy_name(&self) -> &str {
        match &self.kind {
            PlanKind::Builtin(s) => s.name(),
            PlanKind::Explicit(_) => "EXPLICIT",
        }
    }

    /// Materialize the partition for a concrete configuration. Groups keep
    /// the canonical slot walk order (first occurrence decides a group's
    /// position, and the first slot in a group is its earliest member).
    pub fn groups(&self, config: &ModelConfig) -> Result<Vec<Vec<SlotId>>> {
        let all = enumerate_slots(config, &self.targets);
        match &self.kind {
            PlanKind::Builtin(strategy) => {
                let mut index: HashMap<SlotId, usize> = HashMap::new();
                let mut groups: Vec<Vec<SlotId>> = Vec::new();
                for slot in all {
                    let key = if strategy.shares(&slot) { slot.erased() } else { slot.clone() };
                    match index.get(&key) {
                        Some(&g) => groups[g].push(slot),
                        None => {
                            index.insert(key, groups.len());
                            groups.push(vec![slot]);
                        }
                    }
                }
                Ok(groups)
            }
            PlanKind::Explicit(listed) => {
                let findings = self.validate(config);
                if let Some(f) = findings.first() {
                    return Err(Error::InvalidPlan(f.clone()));
                }
                // listed groups first (in given order), then singletons for
                // every unmentioned slot, in canonical order
                let mentioned: HashSet<&SlotId> = listed.iter().flatten().collect();
                let mut groups = listed.clone();
                for slot in &all {
                    if !mentioned.contains(slot) {
                        groups.push(vec![slot.clone()]);
                    }
                }
                Ok(groups)
            }
        }
    }

    /// Structural findings for this plan against a configuration: unknown
    /// slots, duplicate membership, shape conflicts. Empty means valid.
    /// Built-in plans are valid by construction but are checked the same
    /// way so the report path has no blind spot.
    pub fn validate(&self, config: &ModelConfig) -> Vec<String> {
        let mut findings = Vec::new();
        let all: HashSet<SlotId> = enumerate_slots(config, &self.targets).into_iter().collect();
        let listed: Vec<&Vec<SlotId>> = match &self.kind {
            PlanKind::Builtin(_) => Vec::new(),
            PlanKind::Explicit(groups) => groups.iter().collect(),
        };
        let mut seen: HashSet<&SlotId> = HashSet::new();
        for group in listed {
            if group.is_empty() {
                findings.push("empty group".to_string());
                continue;
            }
            let shape0 = group[0].shape(config);
            for slot in group {
                if !all.contains(slot) {
                    findings.push(format!("slot {slot} does not exist in this configuration"));
                }
                if !seen.insert(slot) {
                    findings.push(format!("slot {slot} appears in more than one group"));
                }
                let shape = slot.shape(config);
                if shape != shape0 {
                    findings.push(format!(
                        "shape conflict in group of {}: {} has {:?}, expected {:?}",
                        group[0], slot, shape, shape0
                    ));
                }
            }
        }
        findings
    }
}

fn validate_targets(targets: &[String]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::InvalidPlan("at least one target language required".into()));
    }
    let mut seen = HashSet::new();
    for t in targets {
        if !super::is_valid_target_name(t) {
            return Err(Error::InvalidPlan(format!("bad target language name '{t}'")));
        }
        if !seen.insert(t) {
            return Err(Error::InvalidPlan(format!("duplicate target language '{t}'")));
        }
    }
    Ok(())
}

/// Serialize a plan as structured text:
///
/// ```text
/// strategy = KQ_BOTH
/// targets = de nl
/// ```
///
/// Explicit plans list one `group = <slot> <slot> ...` line per group;
/// unmentioned slots are implicit singletons.
pub fn plan_to_text(plan: &SharingPlan) -> String {
    let mut out = String::new();
    writeln!(out, "strategy = {}", plan.strategy_name()).unwrap();
    writeln!(out, "targets = {}", plan.targets.join(" ")).unwrap();
    if let PlanKind::Explicit(groups) = &plan.kind {
        for group in groups {
            let slots: Vec<String> = group.iter().map(|s| s.to_string()).collect();
            writeln!(out, "group = {}", slots.join(" ")).unwrap();
        }
    }
    out
}

pub fn plan_from_text(text: &str) -> Result<SharingPlan> {
    let mut strategy: Option<String> = None;
    let mut targets: Option<Vec<String>> = None;
    let mut groups: Vec<Vec<SlotId>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidPlan(format!("plan line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "strategy" => strategy = Some(value.to_string()),
            "targets" => {
                targets = Some(value.split_whitespace().map(str::to_string).collect())
            }
            "group" => {
                let group: Result<Vec<SlotId>> =
                    value.split_whitespace().map(str::parse).collect();
                groups.push(group?);
            }
            other => {
                return Err(Error::InvalidPlan(format!("plan line {}: unknown key '{other}'", lineno + 1)))
            }
        }
    }
    let strategy = strategy.ok_or_else(|| Error::InvalidPlan("plan missing 'strategy'".into()))?;
    let targets = targets.ok_or_else(|| Error::InvalidPlan("plan missing 'targets'".into()))?;
    if strategy == "EXPLICIT" {
        SharingPlan::explicit(groups, &targets)
    } else {
        if !groups.is_empty() {
            return Err(Error::InvalidPlan(
                "group lines are only allowed with strategy = EXPLICIT".into(),
            ));
        }
        SharingPlan::from_strategy(Strategy::from_name(&strategy)?, &targets)
    }
}
