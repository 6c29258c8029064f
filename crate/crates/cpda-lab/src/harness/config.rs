//! Experiment configuration: a TOML file with one block per pipeline
//! stage. Every field has a default, so `{}` is a runnable config; all
//! validation happens up front, before any trial runs.

use std::path::Path;

use serde::Deserialize;

use crate::clustering::FormationParams;
use crate::cpda::{AggregationMode, CpdaParams, Defenses};
use crate::sim::TopologyConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials: u64,
    pub topology: TopologyBlock,
    pub keydist: KeydistBlock,
    pub clustering: ClusteringBlock,
    pub cpda: CpdaBlock,
    pub adversary: Option<AdversaryBlock>,
    pub output: OutputBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1,
            trials: 1,
            topology: TopologyBlock::default(),
            keydist: KeydistBlock::default(),
            clustering: ClusteringBlock::default(),
            cpda: CpdaBlock::default(),
            adversary: None,
            output: OutputBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyBlock {
    pub node_count: u32,
    pub server: u32,
    /// Connection radius on the unit square.
    pub radius: f64,
    /// Reject layouts whose server component covers less than this
    /// fraction of the nodes.
    pub min_connected_fraction: f64,
    /// When present, an explicit edge list is used instead of random
    /// geometric placement.
    pub edges: Option<Vec<(u32, u32)>>,
}

impl Default for TopologyBlock {
    fn default() -> Self {
        TopologyBlock {
            node_count: 100,
            server: 0,
            radius: 0.2,
            min_connected_fraction: 0.9,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeydistBlock {
    pub pool_size: u64,
    pub ring_size: u32,
}

impl Default for KeydistBlock {
    fn default() -> Self {
        KeydistBlock { pool_size: 1000, ring_size: 50 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringBlock {
    pub p_c: f64,
    pub wait_rounds: u32,
    pub max_rounds: u32,
    pub min_cluster_size: usize,
}

impl Default for ClusteringBlock {
    fn default() -> Self {
        let d = FormationParams::default();
        ClusteringBlock {
            p_c: d.p_c,
            wait_rounds: d.wait_rounds,
            max_rounds: d.max_rounds,
            min_cluster_size: d.min_cluster_size,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpdaBlock {
    /// "standard" or "efficient". Efficient recovery applies to 3-member
    /// clusters; larger clusters always use the standard solve, since a
    /// dominant seed for them would push shares past the magnitude bound.
    pub mode: String,
    /// "none", "seeds", "shares" or "all".
    pub defenses: String,
    pub d_max: u64,
    pub r_max: u64,
    pub seed_lo: u64,
    pub seed_hi: u64,
    pub efficient_leader_seed: u64,
    pub max_retries: u32,
    pub retry_on_share_reject: bool,
}

impl Default for CpdaBlock {
    fn default() -> Self {
        let d = CpdaParams::default();
        CpdaBlock {
            mode: "standard".into(),
            defenses: "none".into(),
            d_max: d.d_max,
            r_max: d.r_max,
            seed_lo: d.seed_lo,
            seed_hi: d.seed_hi,
            efficient_leader_seed: d.efficient_leader_seed,
            max_retries: d.max_retries,
            retry_on_share_reject: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryBlock {
    /// "leader", "member" or "imbalanced": which participant of each
    /// 3-member cluster plays the attacker. Larger clusters run honestly
    /// (a dominant seed would overflow their share magnitudes).
    pub role: String,
    /// Defaults to 2^40 for the dominant-seed roles and to `seed_hi` for
    /// the imbalanced role.
    pub attack_seed: Option<u64>,
}

impl Default for AdversaryBlock {
    fn default() -> Self {
        AdversaryBlock { role: "leader".into(), attack_seed: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: String,
    pub trials_file: String,
    pub summary_file: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: "out".into(),
            trials_file: "trials.jsonl".into(),
            summary_file: "summary.csv".into(),
        }
    }
}

/// Which participant of a cluster plays the attacker in pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineRole {
    Leader,
    Member,
    Imbalanced,
}

pub fn parse_mode(s: &str) -> Option<AggregationMode> {
    match s {
        "standard" => Some(AggregationMode::Standard),
        "efficient" => Some(AggregationMode::Efficient),
        _ => None,
    }
}

pub fn parse_defenses(s: &str) -> Option<Defenses> {
    match s {
        "none" => Some(Defenses::none()),
        "seeds" => Some(Defenses { seed_check: true, share_check: false }),
        "shares" => Some(Defenses { seed_check: false, share_check: true }),
        "all" => Some(Defenses::all()),
        _ => None,
    }
}

pub fn parse_role(s: &str) -> Option<PipelineRole> {
    match s {
        "leader" => Some(PipelineRole::Leader),
        "member" => Some(PipelineRole::Member),
        "imbalanced" => Some(PipelineRole::Imbalanced),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        let t = &self.topology;
        if t.node_count < 4 {
            return fail(format!("node_count must be at least 4, got {}", t.node_count));
        }
        if t.server >= t.node_count {
            return fail(format!("server {} out of range 0..{}", t.server, t.node_count));
        }
        if t.edges.is_none() && !(t.radius > 0.0 && t.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", t.radius));
        }
        if !(t.min_connected_fraction > 0.0 && t.min_connected_fraction <= 1.0) {
            return fail(format!(
                "min_connected_fraction must lie in (0, 1], got {}",
                t.min_connected_fraction
            ));
        }
        let k = &self.keydist;
        if k.ring_size == 0 || k.ring_size as u64 > k.pool_size {
            return fail(format!(
                "ring_size {} must lie in 1..=pool_size {}",
                k.ring_size, k.pool_size
            ));
        }
        let c = &self.clustering;
        if !(0.0..=1.0).contains(&c.p_c) {
            return fail(format!("p_c must lie in [0, 1], got {}", c.p_c));
        }
        if c.max_rounds == 0 {
            return fail("max_rounds must be at least 1".into());
        }
        if c.min_cluster_size < 3 {
            return fail(format!(
                "min_cluster_size must be at least 3 for the aggregation protocol, got {}",
                c.min_cluster_size
            ));
        }
        let p = &self.cpda;
        if parse_mode(&p.mode).is_none() {
            return fail(format!("mode must be 'standard' or 'efficient', got '{}'", p.mode));
        }
        if parse_defenses(&p.defenses).is_none() {
            return fail(format!(
                "defenses must be one of none|seeds|shares|all, got '{}'",
                p.defenses
            ));
        }
        if p.seed_lo == 0 || p.seed_lo > p.seed_hi {
            return fail(format!(
                "seed range [{}, {}] must satisfy 1 <= lo <= hi",
                p.seed_lo, p.seed_hi
            ));
        }
        if let Some(adv) = &self.adversary {
            let Some(role) = parse_role(&adv.role) else {
                return fail(format!(
                    "adversary role must be one of leader|member|imbalanced, got '{}'",
                    adv.role
                ));
            };
            if role == PipelineRole::Imbalanced {
                let seed = adv.attack_seed.unwrap_or(p.seed_hi);
                if !(p.seed_lo..=p.seed_hi).contains(&seed) {
                    return fail(format!(
                        "imbalanced attack seed {seed} must lie in the honest range [{}, {}]",
                        p.seed_lo, p.seed_hi
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn topology_config(&self) -> TopologyConfig {
        let t = &self.topology;
        match &t.edges {
            Some(edges) => TopologyConfig::Explicit {
                node_count: t.node_count,
                server: t.server,
                edges: edges.clone(),
            },
            None => TopologyConfig::RandomGeometric {
                node_count: t.node_count,
                radius: t.radius,
                server: t.server,
                min_connected_fraction: t.min_connected_fraction,
            },
        }
    }

    pub fn formation_params(&self) -> FormationParams {
        let c = &self.clustering;
        FormationParams {
            p_c: c.p_c,
            wait_rounds: c.wait_rounds,
            max_rounds: c.max_rounds,
            min_cluster_size: c.min_cluster_size,
        }
    }

    pub fn cpda_params(&self) -> CpdaParams {
        let p = &self.cpda;
        CpdaParams {
            d_max: p.d_max,
            r_max: p.r_max,
            seed_lo: p.seed_lo,
            seed_hi: p.seed_hi,
            efficient_leader_seed: p.efficient_leader_seed,
            max_retries: p.max_retries,
        }
    }

    pub fn mode(&self) -> AggregationMode {
        parse_mode(&self.cpda.mode).expect("validated")
    }

    pub fn defenses(&self) -> Defenses {
        parse_defenses(&self.cpda.defenses).expect("validated")
    }

    pub fn adversary_role(&self) -> Option<(PipelineRole, u64)> {
        let adv = self.adversary.as_ref()?;
        let role = parse_role(&adv.role).expect("validated");
        let seed = adv.attack_seed.unwrap_or(match role {
            PipelineRole::Imbalanced => self.cpda.seed_hi,
            _ => 1 << 40,
        });
        Some((role, seed))
    }
}
