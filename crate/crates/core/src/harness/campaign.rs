//! Fuzz campaigns: many generated adversaries against one system.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::generate::{generate, Mode, Profile};
use super::{run_system, MonitorLevel, RunReport, DEFAULT_FUEL};
use crate::loader::SystemImage;
use crate::machine::{MachineState, Mutation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CampaignConfig {
    pub runs: u64,
    pub fuel: u64,
    /// Run `i` uses seed `seed + i`.
    pub seed: u64,
    pub monitors: MonitorLevel,
    /// Use one generator for every run instead of choosing by seed.
    pub mode: Option<Mode>,
    pub mutation: Option<Mutation>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            runs: 100,
            fuel: DEFAULT_FUEL,
            seed: 0,
            monitors: MonitorLevel::Cheap,
            mode: None,
            mutation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Campaign {
    /// One report per run, ordered by seed.
    pub reports: Vec<RunReport>,
}

impl Campaign {
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| r.is_failure()).count()
    }

    pub fn summary(&self) -> String {
        format!("SUMMARY runs={} failures={}", self.reports.len(), self.failures())
    }

    /// Every run line followed by the summary line.
    pub fn render(&self, tsv: bool) -> String {
        let mut out = String::new();
        if tsv {
            out.push_str("seed\toutcome\tsteps\tflag\tviolations\n");
        }
        for r in &self.reports {
            out.push_str(&if tsv { r.tsv() } else { r.line() });
            out.push('\n');
        }
        out.push_str(&self.summary());
        out.push('\n');
        out
    }
}

/// Runs one generated adversary.
pub fn run_seed(
    image: &SystemImage,
    base: &MachineState,
    profile: &Profile,
    cfg: &CampaignConfig,
    seed: u64,
) -> RunReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = cfg.mode.unwrap_or_else(|| Mode::of_seed(seed));
    let adversary = generate(&mut rng, profile, mode);
    let mut state = base.clone();
    state.config.mutation = cfg.mutation;
    adversary.install(profile, &mut state);
    run_system(image, state, cfg.fuel, cfg.monitors, Some(seed)).0
}

/// Runs a campaign. Returns `None` when the system has no adversary region.
pub fn campaign(image: &SystemImage, cfg: &CampaignConfig) -> Option<Campaign> {
    let profile = Profile::of(image)?;
    let base = image.initial_state();
    let mut reports: Vec<_> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_seed(image, &base, &profile, cfg, cfg.seed.wrapping_add(i)))
        .collect();
    reports.sort_by_key(|r| r.seed);
    Some(Campaign { reports })
}

/// Whether a campaign against a machine with `mutation` reports any failure.
pub fn mutation_detected(image: &SystemImage, mutation: Mutation, cfg: &CampaignConfig) -> bool {
    let cfg = CampaignConfig { mutation: Some(mutation), ..*cfg };
    campaign(image, &cfg).is_some_and(|c| c.failures() > 0)
}
