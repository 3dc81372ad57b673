//! Episode statistics and their CSV encodings.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::grid::Team;
use crate::reward::RewardBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// One learning leader sharing mutated models with non-learning allies.
    Single,
    /// Independent learners without sharing.
    Marl,
    /// One network controlling every friendly agent.
    Central,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Single => "single",
            Architecture::Marl => "marl",
            Architecture::Central => "central",
        }
    }
}

/// Mean and population variance of per-timestep wall-clock seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTiming {
    pub mean: f64,
    pub variance: f64,
}

impl StepTiming {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean: 0.0,
                variance: 0.0,
            };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self { mean, variance }
    }
}

/// One friendly agent's episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRecord {
    pub team: Team,
    pub collected: u32,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    /// Index within the phase, from 0.
    pub episode: usize,
    /// Lifetime during training, from 1; 0 for evaluation episodes.
    pub lifetime: usize,
    pub phase: Phase,
    pub friendly: u32,
    pub adversary: u32,
    pub win: bool,
    /// Friendly agents; slot 0 is the leader (or first learner).
    pub agents: Vec<AgentRecord>,
    pub timing: Option<StepTiming>,
}

pub const FIXED_COLUMNS: [&str; 10] = [
    "run_id",
    "architecture",
    "lifetime",
    "episode",
    "phase",
    "friendly_resources",
    "adversary_resources",
    "win",
    "mean_step_seconds",
    "var_step_seconds",
];

pub fn stats_header(slots: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 0..slots {
        for suffix in ["collected", "base", "Re", "Ra"] {
            h.push(format!("agent{i}_{suffix}"));
        }
    }
    h
}

/// One row per episode. Agents absent from an episode leave their columns
/// empty, as do the timing columns when timing was not recorded.
pub fn write_stats<W: Write>(
    out: W,
    run_id: &str,
    architecture: Architecture,
    slots: usize,
    episodes: &[EpisodeStats],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(stats_header(slots))?;
    for e in episodes {
        let mut row = vec![
            run_id.to_string(),
            architecture.as_str().to_string(),
            e.lifetime.to_string(),
            e.episode.to_string(),
            e.phase.as_str().to_string(),
            e.friendly.to_string(),
            e.adversary.to_string(),
            u8::from(e.win).to_string(),
        ];
        match e.timing {
            Some(t) => row.extend([t.mean.to_string(), t.variance.to_string()]),
            None => row.extend([String::new(), String::new()]),
        }
        for i in 0..slots {
            match e.agents.get(i) {
                Some(a) => row.extend([
                    a.collected.to_string(),
                    a.reward.base.to_string(),
                    a.reward.from_re.to_string(),
                    a.reward.from_ra.to_string(),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stats_file(
    path: impl AsRef<Path>,
    run_id: &str,
    architecture: Architecture,
    slots: usize,
    episodes: &[EpisodeStats],
) -> csv::Result<()> {
    write_stats(File::create(path)?, run_id, architecture, slots, episodes)
}

pub const EXPLORER_THRESHOLD: f64 = 0.65;
pub const DISRUPTOR_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Explorer,
    Disruptor,
    Mixed,
    /// No shaping reward was earned.
    Undetermined,
}

impl Role {
    /// `share` is the ally-distance fraction of the shaping reward.
    pub fn from_share(share: Option<f64>) -> Self {
        match share {
            Some(s) if s > EXPLORER_THRESHOLD => Role::Explorer,
            Some(s) if s < DISRUPTOR_THRESHOLD => Role::Disruptor,
            Some(_) => Role::Mixed,
            None => Role::Undetermined,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Explorer => "explorer",
            Role::Disruptor => "disruptor",
            Role::Mixed => "mixed",
            Role::Undetermined => "undetermined",
        }
    }
}

/// Cumulative reward of one friendly slot over a set of episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleSummary {
    pub slot: usize,
    pub team: Team,
    pub collected: u64,
    pub reward: RewardBreakdown,
}

impl RoleSummary {
    pub fn ra_share(&self) -> Option<f64> {
        self.reward.ally_share()
    }

    pub fn role(&self) -> Role {
        Role::from_share(self.ra_share())
    }
}

/// Sums each friendly slot over the episodes of `phase`.
pub fn role_summaries(episodes: &[EpisodeStats], phase: Phase) -> Vec<RoleSummary> {
    let mut out: Vec<RoleSummary> = Vec::new();
    for e in episodes.iter().filter(|e| e.phase == phase) {
        for (slot, a) in e.agents.iter().enumerate() {
            if out.len() <= slot {
                out.push(RoleSummary {
                    slot,
                    team: a.team,
                    collected: 0,
                    reward: RewardBreakdown::default(),
                });
            }
            out[slot].collected += u64::from(a.collected);
            out[slot].reward += a.reward;
        }
    }
    out
}

fn team_label(team: Team) -> &'static str {
    match team {
        Team::Leader => "leader",
        Team::Ally => "ally",
        Team::Adversary => "adversary",
    }
}

pub fn write_roles<W: Write>(out: W, run_id: &str, summaries: &[RoleSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "run_id",
        "agent",
        "team",
        "collected",
        "base",
        "Re",
        "Ra",
        "total",
        "Ra_share",
        "Re_share",
        "role",
    ])?;
    for s in summaries {
        let share = s.ra_share();
        w.write_record([
            run_id.to_string(),
            format!("agent{}", s.slot),
            team_label(s.team).to_string(),
            s.collected.to_string(),
            s.reward.base.to_string(),
            s.reward.from_re.to_string(),
            s.reward.from_ra.to_string(),
            s.reward.total.to_string(),
            share.map_or(String::new(), |v| v.to_string()),
            share.map_or(String::new(), |v| (1.0 - v).to_string()),
            s.role().as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Eval-phase aggregates of one run: the per-configuration quantities of a
/// sharing-frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub lifetimes: usize,
    pub episodes_per_lifetime: usize,
    pub seed: u64,
    pub eval_episodes: usize,
    pub friendly_mean: f64,
    pub friendly_var: f64,
    pub adversary_mean: f64,
    pub adversary_var: f64,
    pub friendly_wins: usize,
    pub adversary_wins: usize,
    pub draws: usize,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var)
}

impl RunSummary {
    pub fn from_episodes(
        run_id: &str,
        lifetimes: usize,
        episodes_per_lifetime: usize,
        seed: u64,
        episodes: &[EpisodeStats],
    ) -> Self {
        let eval: Vec<&EpisodeStats> = episodes.iter().filter(|e| e.phase == Phase::Eval).collect();
        let (friendly_mean, friendly_var) = mean_var(eval.iter().map(|e| f64::from(e.friendly)));
        let (adversary_mean, adversary_var) = mean_var(eval.iter().map(|e| f64::from(e.adversary)));
        Self {
            run_id: run_id.to_string(),
            lifetimes,
            episodes_per_lifetime,
            seed,
            eval_episodes: eval.len(),
            friendly_mean,
            friendly_var,
            adversary_mean,
            adversary_var,
            friendly_wins: eval.iter().filter(|e| e.friendly > e.adversary).count(),
            adversary_wins: eval.iter().filter(|e| e.adversary > e.friendly).count(),
            draws: eval.iter().filter(|e| e.adversary == e.friendly).count(),
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "run_id",
    "lifetimes",
    "episodes_per_lifetime",
    "seed",
    "eval_episodes",
    "friendly_mean",
    "friendly_var",
    "adversary_mean",
    "adversary_var",
    "friendly_wins",
    "adversary_wins",
    "draws",
];

pub fn write_summary<W: Write>(out: W, rows: &[RunSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.lifetimes.to_string(),
            r.episodes_per_lifetime.to_string(),
            r.seed.to_string(),
            r.eval_episodes.to_string(),
            r.friendly_mean.to_string(),
            r.friendly_var.to_string(),
            r.adversary_mean.to_string(),
            r.adversary_var.to_string(),
            r.friendly_wins.to_string(),
            r.adversary_wins.to_string(),
            r.draws.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(team: Team, collected: u32, re: f64, ra: f64) -> AgentRecord {
        let base = f64::from(collected);
        AgentRecord {
            team,
            collected,
            reward: RewardBreakdown {
                total: base + re + ra,
                base,
                from_re: re,
                from_ra: ra,
            },
        }
    }

    fn episode(phase: Phase, friendly: u32, adversary: u32, agents: Vec<AgentRecord>) -> EpisodeStats {
        EpisodeStats {
            episode: 0,
            lifetime: 1,
            phase,
            friendly,
            adversary,
            win: friendly > adversary,
            agents,
            timing: None,
        }
    }

    #[test]
    fn header_only_for_no_episodes() {
        let mut buf = Vec::new();
        write_stats(&mut buf, "r", Architecture::Single, 2, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "run_id,architecture,lifetime,episode,phase,friendly_resources,adversary_resources,win,\
             mean_step_seconds,var_step_seconds,agent0_collected,agent0_base,agent0_Re,agent0_Ra,\
             agent1_collected,agent1_base,agent1_Re,agent1_Ra\n"
        );
    }

    #[test]
    fn absent_agents_and_timing_are_blank() {
        let mut buf = Vec::new();
        let e = episode(Phase::Train, 3, 1, vec![record(Team::Leader, 3, 0.5, 0.25)]);
        write_stats(&mut buf, "r", Architecture::Marl, 2, &[e]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row, "r,marl,1,0,train,3,1,1,,,3,3,0.5,0.25,,,,");
    }

    #[test]
    fn roles_follow_thresholds() {
        assert_eq!(Role::from_share(Some(0.8)), Role::Explorer);
        assert_eq!(Role::from_share(Some(0.2)), Role::Disruptor);
        assert_eq!(Role::from_share(Some(0.5)), Role::Mixed);
        assert_eq!(Role::from_share(Some(0.65)), Role::Mixed);
        assert_eq!(Role::from_share(None), Role::Undetermined);
        let eps = vec![
            episode(
                Phase::Train,
                2,
                0,
                vec![record(Team::Leader, 1, 0.1, 0.3), record(Team::Ally, 1, 0.0, 0.5)],
            ),
            episode(Phase::Train, 1, 0, vec![record(Team::Leader, 1, 0.3, 0.3)]),
            episode(Phase::Eval, 9, 0, vec![record(Team::Leader, 9, 9.0, 0.0)]),
        ];
        let s = role_summaries(&eps, Phase::Train);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].collected, 2);
        assert!((s[0].ra_share().unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(s[1].role(), Role::Explorer);
    }

    #[test]
    fn summary_counts_eval_wins() {
        let eps = vec![
            episode(Phase::Eval, 3, 1, vec![]),
            episode(Phase::Eval, 1, 3, vec![]),
            episode(Phase::Eval, 2, 2, vec![]),
            episode(Phase::Eval, 5, 1, vec![]),
            episode(Phase::Train, 9, 0, vec![]),
        ];
        let s = RunSummary::from_episodes("x", 2, 3, 7, &eps);
        assert_eq!(
            (s.friendly_wins, s.adversary_wins, s.draws, s.eval_episodes),
            (2, 1, 1, 4)
        );
        assert!((s.friendly_mean - 2.75).abs() < 1e-12);
        assert!((s.friendly_var - 2.1875).abs() < 1e-12);
    }

    #[test]
    fn timing_moments() {
        let t = StepTiming::from_samples(&[1.0, 2.0, 3.0]);
        assert!((t.mean - 2.0).abs() < 1e-12);
        assert!((t.variance - 2.0 / 3.0).abs() < 1e-12);
    }
}
