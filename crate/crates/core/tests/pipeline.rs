use rand::SeedableRng;

use forage::config::RunConfig;
use forage::episode::{run_episode, Controller, EpisodeSetup, RunError};
use forage::grid::{Action, GridWorld, Team};
use forage::neural::{argmax, forward, NetworkSpec};
use forage::orchestrator::{episode_stats, run_training, Member, Squad};
use forage::reward::{RewardBreakdown, RewardWeights};
use forage::rng::SimRng;
use forage::sharing::disseminate;
use forage::stats::{write_stats, Architecture, Phase};

/// Wraps a squad, summing rewards independently of the world's own
/// accumulators and checking that frozen members act greedily.
struct Audit<'a> {
    squad: Squad<'a>,
    totals: Vec<RewardBreakdown>,
    frozen_checked: usize,
}

impl Controller for Audit<'_> {
    fn begin_timestep(&mut self, world: &GridWorld) -> Result<(), RunError> {
        self.squad.begin_timestep(world)
    }

    fn choose(&mut self, world: &GridWorld, id: usize) -> Result<Action, RunError> {
        let action = self.squad.choose(world, id)?;
        if let Member::Frozen(params) = &self.squad.members[id] {
            let mut input = Vec::new();
            world.observe(id, self.squad.radius)?.extend_f32(&mut input);
            let q = forward(self.squad.spec, params, &input, 1)?;
            assert_eq!(action.index(), argmax(&q), "frozen member {id} did not act greedily");
            self.frozen_checked += 1;
        }
        Ok(action)
    }

    fn rewarded(&mut self, id: usize, reward: &RewardBreakdown) {
        self.totals[id] += *reward;
        self.squad.rewarded(id, reward);
    }

    fn end_timestep(&mut self, world: &GridWorld, last: bool) -> Result<(), RunError> {
        self.squad.end_timestep(world, last)
    }
}

fn small_config() -> RunConfig {
    RunConfig::parse(
        "grid_size = 10\ndensity = 0.2\nallies = 2\nadversaries = 2\nradius = 3\nadversary_radius = 3\n\
         conv_channels = 4\nhidden = 16\nlifetimes = 2\nepisodes_per_lifetime = 2\ntimesteps = 25\neval_episodes = 3\n",
    )
    .unwrap()
}

#[test]
fn csv_reward_columns_match_independent_accumulation() {
    let cfg = small_config();
    let trained = run_training(&cfg).unwrap();
    let allies = disseminate(
        &trained.leader,
        cfg.allies,
        cfg.mutation_sigma,
        &mut SimRng::seed_from_u64(1),
    );
    let spec: NetworkSpec = cfg.network(1);
    let env = cfg.env(allies.len());
    let weights: RewardWeights = cfg.reward;

    let mut stats = Vec::new();
    let mut expected = RewardBreakdown::default();
    let mut checked = 0;
    for e in 0..4 {
        let setup = EpisodeSetup {
            env: &env,
            seed: cfg.seed,
            episode_index: 1000 + e,
            timesteps: cfg.timesteps,
            adversary_radius: cfg.adversary_radius,
            weights: &weights,
            record_timing: false,
        };
        let mut members = vec![Member::Frozen(&trained.leader)];
        members.extend(allies.iter().map(Member::Frozen));
        let mut audit = Audit {
            squad: Squad {
                spec: &spec,
                radius: cfg.radius,
                members,
            },
            totals: vec![RewardBreakdown::default(); 1 + allies.len()],
            frozen_checked: 0,
        };
        let result = run_episode(&setup, &mut audit).unwrap();
        for t in &audit.totals {
            expected += *t;
        }
        checked += audit.frozen_checked;
        stats.push(episode_stats(result, e as usize, 0, Phase::Eval));
    }
    assert_eq!(checked, 4 * cfg.timesteps * (1 + allies.len()));

    let mut buf = Vec::new();
    write_stats(&mut buf, "audit", Architecture::Single, 1 + cfg.allies, &stats).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (mut base, mut re, mut ra) = (0.0, 0.0, 0.0);
    for row in reader.records() {
        let row = row.unwrap();
        let friendly: u32 = row[col("friendly_resources")].parse().unwrap();
        let adversary: u32 = row[col("adversary_resources")].parse().unwrap();
        assert_eq!(&row[col("win")], if friendly > adversary { "1" } else { "0" });
        let mut collected = 0;
        for i in 0..=cfg.allies {
            collected += row[col(&format!("agent{i}_collected"))].parse::<u32>().unwrap();
            base += row[col(&format!("agent{i}_base"))].parse::<f64>().unwrap();
            re += row[col(&format!("agent{i}_Re"))].parse::<f64>().unwrap();
            ra += row[col(&format!("agent{i}_Ra"))].parse::<f64>().unwrap();
        }
        assert_eq!(collected, friendly);
    }
    assert!((base - expected.base).abs() < 1e-9);
    assert!((re - expected.from_re).abs() < 1e-9);
    assert!((ra - expected.from_ra).abs() < 1e-9);
    assert!((base + re + ra - expected.total).abs() < 1e-9);
    assert!(expected.total > 0.0);
}

#[test]
fn win_column_is_recomputable_over_a_whole_run() {
    let cfg = small_config();
    let trained = run_training(&cfg).unwrap();
    let mut buf = Vec::new();
    write_stats(&mut buf, "r", Architecture::Single, 1 + cfg.allies, &trained.stats).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let mut rows = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let (f, a): (u32, u32) = (row[5].parse().unwrap(), row[6].parse().unwrap());
        assert_eq!(&row[7], if f > a { "1" } else { "0" });
        rows += 1;
    }
    assert_eq!(rows, cfg.training_episodes());
    let first_lifetime = &trained.stats[..cfg.episodes_per_lifetime];
    assert!(first_lifetime
        .iter()
        .all(|e| e.agents.len() == 1 && e.agents[0].team == Team::Leader));
    assert!(trained.stats[cfg.episodes_per_lifetime..].iter().all(|e| e
        .agents
        .iter()
        .skip(1)
        .all(|a| a.team == Team::Ally)));
}
