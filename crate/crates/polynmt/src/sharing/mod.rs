//! Addressable parameter slots and sharing plans.
//!
//! Every weight tensor in the architecture has a [`SlotId`] — component,
//! layer, sublayer, role, target language. A [`SharingPlan`] partitions the
//! slots into groups; resolving a plan allocates one storage cell per group
//! so that every slot in a group reads and writes the same memory. Training
//! a two-target model under a fully shared plan is then *structurally*
//! identical to training one model, while an empty plan trains disjoint
//! per-target models inside the same table.

mod plan;
mod table;

pub use plan::{plan_from_text, plan_to_text, PlanKind, SharingPlan, Strategy};
pub use table::{count_parameters, GroupCount, ParamCell, ParamCounts, ParameterTable};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Embedding,
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sublayer {
    SelfAttn,
    EncDecAttn,
    Ffn,
    /// The stack-final layer norm; not tied to any layer.
    NormFinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    K,
    Q,
    V,
    F,
    L1,
    B1,
    L2,
    B2,
    Gain,
    Bias,
    E,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::K => "K",
            Role::Q => "Q",
            Role::V => "V",
            Role::F => "F",
            Role::L1 => "L1",
            Role::B1 => "b1",
            Role::L2 => "L2",
            Role::B2 => "b2",
            Role::Gain => "gain",
            Role::Bias => "bias",
            Role::E => "E",
        }
    }

    fn from_name(s: &str) -> Option<Role> {
        Some(match s {
            "K" => Role::K,
            "Q" => Role::Q,
            "V" => Role::V,
            "F" => Role::F,
            "L1" => Role::L1,
            "b1" => Role::B1,
            "L2" => Role::L2,
            "b2" => Role::B2,
            "gain" => Role::Gain,
            "bias" => Role::Bias,
            "E" => Role::E,
            _ => return None,
        })
    }

    /// True for weight matrices (as opposed to biases and norm parameters);
    /// this is the "weights-only" side of parameter counting.
    pub fn is_weight_matrix(self) -> bool {
        matches!(self, Role::K | Role::Q | Role::V | Role::F | Role::L1 | Role::L2 | Role::E)
    }
}

/// Address of one parameter tensor.
///
/// The target is part of the address for *every* component. Plans that
/// treat the embedding or encoder as global (all built-ins except NONE)
/// express that by grouping the per-target slots, which keeps fully
/// separate per-target models (NONE) representable in the same scheme.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotId {
    pub component: Component,
    pub layer: Option<u32>,
    pub sublayer: Option<Sublayer>,
    pub role: Role,
    pub target: String,
}

impl SlotId {
    pub fn embedding(target: &str) -> SlotId {
        SlotId {
            component: Component::Embedding,
            layer: None,
            sublayer: None,
            role: Role::E,
            target: target.to_string(),
        }
    }

    pub fn layered(
        component: Component,
        layer: u32,
        sublayer: Sublayer,
        role: Role,
        target: &str,
    ) -> SlotId {
        SlotId { component, layer: Some(layer), sublayer: Some(sublayer), role, target: target.to_string() }
    }

    pub fn norm_final(component: Component, role: Role, target: &str) -> SlotId {
        SlotId { component, layer: None, sublayer: Some(Sublayer::NormFinal), role, target: target.to_string() }
    }

    /// Tensor shape of this slot under a given configuration.
    pub fn shape(&self, config: &ModelConfig) -> Vec<usize> {
        match self.role {
            Role::E => vec![config.vocab_size, config.d_m],
            Role::K | Role::Q | Role::V | Role::F => vec![config.d_m, config.d_m],
            Role::L1 => vec![config.d_m, config.d_h],
            Role::L2 => vec![config.d_h, config.d_m],
            Role::B1 => vec![config.d_h],
            Role::B2 | Role::Gain | Role::Bias => vec![config.d_m],
        }
    }

    /// The same slot with the target erased; used as a grouping key when a
    /// strategy shares this slot across targets.
    fn erased(&self) -> SlotId {
        SlotId { target: String::new(), ..self.clone() }
    }
}

impl std::fmt::Display for SlotId {
    /// `decoder.L3.self_attn.K@de`, `embedding.E@de`,
    /// `encoder.norm_final.gain@nl`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let comp = match self.component {
            Component::Embedding => "embedding",
            Component::Encoder => "encoder",
            Component::Decoder => "decoder",
        };
        write!(f, "{comp}")?;
        if let Some(l) = self.layer {
            write!(f, ".L{l}")?;
        }
        if let Some(s) = self.sublayer {
            let s = match s {
                Sublayer::SelfAttn => "self_attn",
                Sublayer::EncDecAttn => "encdec_attn",
                Sublayer::Ffn => "ffn",
                Sublayer::NormFinal => "norm_final",
            };
            write!(f, ".{s}")?;
        }
        write!(f, ".{}@{}", self.role.name(), self.target)
    }
}

/// Language names appear inside slot ids, plan text and CLI flags, so keep
/// them to a charset that can't collide with any of those grammars.
pub(crate) fn is_valid_target_name(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl std::str::FromStr for SlotId {
    type Err = Error;

    fn from_str(s: &str) -> Result<SlotId> {
        let bad = || Error::InvalidPlan(format!("malformed slot id '{s}'"));
        let (path, target) = s.split_once('@').ok_or_else(bad)?;
        if !is_valid_target_name(target) {
            return Err(bad());
        }
        let parts: Vec<&str> = path.split('.').collect();
        let component = match parts.first() {
            Some(&"embedding") => Component::Embedding,
            Some(&"encoder") => Component::Encoder,
            Some(&"decoder") => Component::Decoder,
            _ => return Err(bad()),
        };
        let mut idx = 1;
        let layer = match parts.get(idx) {
            Some(p) if p.starts_with('L') && p[1..].chars().all(|c| c.is_ascii_digit()) && p.len() > 1 => {
                idx += 1;
                Some(p[1..].parse::<u32>().map_err(|_| bad())?)
            }
            _ => None,
        };
        let sublayer = match parts.get(idx) {
            Some(&"self_attn") => {
                idx += 1;
                Some(Sublayer::SelfAttn)
            }
            Some(&"encdec_attn") => {
                idx += 1;
                Some(Sublayer::EncDecAttn)
            }
            Some(&"ffn") => {
                idx += 1;
                Some(Sublayer::Ffn)
            }
            Some(&"norm_final") => {
                idx += 1;
                Some(Sublayer::NormFinal)
            }
            _ => None,
        };
        let role = parts
            .get(idx)
            .and_then(|p| Role::from_name(p))
            .ok_or_else(bad)?;
        if parts.len() != idx + 1 {
            return Err(bad());
        }
        let slot = SlotId { component, layer, sublayer, role, target: target.to_string() };
        // reject structurally impossible combinations (e.g. embedding.L0.E)
        if !slot.is_well_formed() {
            return Err(bad());
        }
        Ok(slot)
    }
}

impl SlotId {
    fn is_well_formed(&self) -> bool {
        match self.component {
            Component::Embedding => {
                self.layer.is_none() && self.sublayer.is_none() && self.role == Role::E
            }
            Component::Encoder | Component::Decoder => match self.sublayer {
                Some(Sublayer::NormFinal) => {
                    self.layer.is_none() && matches!(self.role, Role::Gain | Role::Bias)
                }
                Some(Sublayer::SelfAttn) => {
                    self.layer.is_some()
                        && matches!(
                            self.role,
                            Role::K | Role::Q | Role::V | Role::F | Role::Gain | Role::Bias
                        )
                }
                Some(Sublayer::EncDecAttn) => {
                    self.component == Component::Decoder
                        && self.layer.is_some()
                        && matches!(
                            self.role,
                            Role::K | Role::Q | Role::V | Role::F | Role::Gain | Role::Bias
                        )
                }
                Some(Sublayer::Ffn) => {
                    self.layer.is_some()
                        && matches!(
                            self.role,
                            Role::L1 | Role::B1 | Role::L2 | Role::B2 | Role::Gain | Role::Bias
                        )
                }
                None => false,
            },
        }
    }
}

/// All slots of a model in canonical order: targets outermost, then
/// embedding, encoder, decoder; layers inside a stack; fixed role order
/// inside a sublayer. Cell allocation and parameter initialization both
/// walk this order, which is what makes a fully shared two-target table
/// bit-identical to a single-target one.
pub fn enumerate_slots(config: &ModelConfig, targets: &[String]) -> Vec<SlotId> {
    use Component::*;
    use Role::*;
    use Sublayer::*;

    let attn_roles = [K, Q, V, F, Gain, Bias];
    let ffn_roles = [L1, B1, L2, B2, Gain, Bias];
    let mut out = Vec::new();
    for t in targets {
        out.push(SlotId::embedding(t));
        for l in 0..config.num_layers as u32 {
            for r in attn_roles {
                out.push(SlotId::layered(Encoder, l, SelfAttn, r, t));
            }
            for r in ffn_roles {
                out.push(SlotId::layered(Encoder, l, Ffn, r, t));
            }
        }
        out.push(SlotId::norm_final(Encoder, Gain, t));
        out.push(SlotId::norm_final(Encoder, Bias, t));
        for l in 0..config.num_layers as u32 {
            for r in attn_roles {
                out.push(SlotId::layered(Decoder, l, SelfAttn, r, t));
            }
            for r in attn_roles {
                out.push(SlotId::layered(Decoder, l, EncDecAttn, r, t));
            }
            for r in ffn_roles {
                out.push(SlotId::layered(Decoder, l, Ffn, r, t));
            }
        }
        out.push(SlotId::norm_final(Decoder, Gain, t));
        out.push(SlotId::norm_final(Decoder, Bias, t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig { num_layers: 2, d_m: 8, d_h: 16, heads: 2, vocab_size: 17, ..ModelConfig::default() }
    }

    #[test]
    fn slot_strings_round_trip() {
        let samples = [
            "decoder.L3.self_attn.K@de",
            "embedding.E@de",
            "encoder.L0.ffn.b1@nl",
            "decoder.norm_final.gain@de",
            "encoder.norm_final.bias@xx",
            "decoder.L11.encdec_attn.F@pt-br",
        ];
        for s in samples {
            let slot: SlotId = s.parse().unwrap();
            assert_eq!(slot.to_string(), s);
        }
    }

    #[test]
    fn malformed_slot_strings_are_rejected() {
        for s in [
            "decoder.L3.self_attn.K",        // no target
            "decoder.self_attn.K@de",        // attention needs a layer
            "embedding.L0.E@de",             // embedding has no layers
            "encoder.L0.encdec_attn.K@de",   // encoder has no enc-dec attention
            "decoder.L0.ffn.K@de",           // wrong role for ffn
            "decoder.norm_final.K@de",       // norm holds only gain/bias
            "decoder.L0.self_attn.K@de.x",   // trailing junk
            "widget.L0.self_attn.K@de",      // unknown component
            "",
        ] {
            assert!(s.parse::<SlotId>().is_err(), "accepted bad slot '{s}'");
        }
    }

    #[test]
    fn enumeration_counts_match_arithmetic() {
        let cfg = tiny_config();
        let targets = vec!["de".to_string(), "nl".to_string()];
        let slots = enumerate_slots(&cfg, &targets);
        let l = cfg.num_layers;
        // per target: embedding 1, encoder 12 per layer + 2 final,
        // decoder 18 per layer + 2 final
        let per_target = 1 + (12 * l + 2) + (18 * l + 2);
        assert_eq!(slots.len(), 2 * per_target);

        // total and injective
        let set: std::collections::HashSet<_> = slots.iter().cloned().collect();
        assert_eq!(set.len(), slots.len());
    }

    #[test]
    fn enumeration_is_target_major() {
        let cfg = tiny_config();
        let targets = vec!["de".to_string(), "nl".to_string()];
        let slots = enumerate_slots(&cfg, &targets);
        let half = slots.len() / 2;
        assert!(slots[..half].iter().all(|s| s.target == "de"));
        assert!(slots[half..].iter().all(|s| s.target == "nl"));
        // a single-target enumeration is exactly the first half
        let solo = enumerate_slots(&cfg, &targets[..1]);
        assert_eq!(&slots[..half], &solo[..]);
    }

    #[test]
    fn shapes_cover_every_role() {
        let cfg = tiny_config();
        let t = vec!["de".to_string()];
        for slot in enumerate_slots(&cfg, &t) {
            let shape = slot.shape(&cfg);
            let expect: &[usize] = match slot.role {
                Role::E => &[17, 8],
                Role::K | Role::Q | Role::V | Role::F => &[8, 8],
                Role::L1 => &[8, 16],
                Role::L2 => &[16, 8],
                Role::B1 => &[16],
                Role::B2 | Role::Gain | Role::Bias => &[8],
            };
            assert_eq!(shape, expect, "slot {slot}");
        }
    }
}
