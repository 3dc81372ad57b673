//! Bounded grid world: resource placement, agent placement, orthogonal moves
//! with hard borders, resource collection and egocentric observations.
//!
//! Coordinates are `(x, y)` with `x` the column and `y` the row; row 0 is the
//! top of the grid, so [`Action::Up`] decreases `y`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::reward::RewardBreakdown;
use crate::rng::{SimRng, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must be at least 3 cells on each side, got {width}x{height}")]
    GridTooSmall { width: usize, height: usize },
    #[error("resource density must lie in [0, 1], got {0}")]
    InvalidDensity(f64),
    #[error("cannot place {agents} agents on {cells} cells")]
    TooManyAgents { agents: usize, cells: usize },
    #[error("cell ({x}, {y}) is outside the {width}x{height} grid")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
}

/// A lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Manhattan distance between two cells.
pub fn manhattan(a: Cell, b: Cell) -> usize {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Team {
    Leader,
    Ally,
    Adversary,
}

impl Team {
    pub fn is_friendly(self) -> bool {
        !matches!(self, Team::Adversary)
    }
}

/// The four orthogonal moves. The discriminant is the network output index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    /// `(dx, dy)` displacement.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn random(rng: &mut impl Rng) -> Action {
        Self::ALL[rng.random_range(0..Self::COUNT)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub team: Team,
    pub position: Cell,
    /// Resources collected this episode.
    pub collected: u32,
    /// Reward accumulated this episode, split by component.
    pub reward: RewardBreakdown,
}

/// Environment parameters shared by every episode of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub density: f64,
    pub leaders: usize,
    pub allies: usize,
    pub adversaries: usize,
}

impl EnvConfig {
    pub fn square(side: usize, density: f64, leaders: usize, allies: usize, adversaries: usize) -> Self {
        Self {
            width: side,
            height: side,
            density,
            leaders,
            allies,
            adversaries,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.leaders + self.allies + self.adversaries
    }

    /// Largest Manhattan distance between two cells of the grid.
    pub fn max_distance(&self) -> usize {
        (self.width - 1) + (self.height - 1)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.width < 3 || self.height < 3 {
            return Err(GridError::GridTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(GridError::InvalidDensity(self.density));
        }
        let cells = self.width * self.height;
        if self.agent_count() > cells {
            return Err(GridError::TooManyAgents {
                agents: self.agent_count(),
                cells,
            });
        }
        Ok(())
    }
}

/// Result of one agent move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveOutcome {
    pub position: Cell,
    pub collected: bool,
}

/// Egocentric binary window around an agent.
///
/// Stored channel-major: `data[(channel * side + row) * side + col]`, where
/// the window row `r` and column `c` map to the grid cell
/// `(x + c - radius, y + r - radius)`. Channels are resources, friendly
/// agents other than the observer, and adversaries. Stacked observations
/// (used by the centralized controller) carry `3 * k` channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    radius: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Observation {
    pub const RESOURCES: usize = 0;
    pub const FRIENDS: usize = 1;
    pub const ADVERSARIES: usize = 2;
    pub const CHANNELS: usize = 3;

    pub fn empty(radius: usize) -> Self {
        Self::with_channels(radius, Self::CHANNELS)
    }

    fn with_channels(radius: usize, channels: usize) -> Self {
        let side = 2 * radius + 1;
        Self {
            radius,
            channels,
            data: vec![0; channels * side * side],
        }
    }

    /// Concatenates observations of equal radius along the channel axis.
    pub fn stack(parts: &[Observation]) -> Observation {
        let radius = parts.first().map_or(0, |o| o.radius);
        assert!(parts.iter().all(|o| o.radius == radius), "radius mismatch");
        let channels = parts.iter().map(|o| o.channels).sum();
        let mut data = Vec::with_capacity(parts.iter().map(|o| o.data.len()).sum());
        for part in parts {
            data.extend_from_slice(&part.data);
        }
        Observation { radius, channels, data }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        let side = self.side();
        self.data[(channel * side + row) * side + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: bool) {
        let side = self.side();
        self.data[(channel * side + row) * side + col] = u8::from(value);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Appends the window as `f32` network input.
    pub fn extend_f32(&self, out: &mut Vec<f32>) {
        out.extend(self.data.iter().map(|&v| f32::from(v)));
    }
}

/// The simulation state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    resources: Vec<bool>,
    agents: Vec<AgentState>,
    timestep: u64,
    rng_seed: u64,
    rng: SimRng,
    initial_resources: usize,
}

impl GridWorld {
    /// Samples a fresh episode: resources with probability `density` per
    /// cell, agents from the centred distribution. The first leader starts
    /// on the exact centre cell in episode 0.
    pub fn init_episode(config: &EnvConfig, seed: u64, episode_index: u64) -> Result<Self, GridError> {
        config.validate()?;
        let rng_seed = crate::rng::derive_seed(seed, Stream::Episode, episode_index);
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(rng_seed);
        let (width, height) = (config.width, config.height);

        let resources: Vec<bool> = (0..width * height).map(|_| rng.random_bool(config.density)).collect();

        let mut occupied = vec![false; width * height];
        let mut agents = Vec::with_capacity(config.agent_count());
        let teams = std::iter::repeat_n(Team::Leader, config.leaders)
            .chain(std::iter::repeat_n(Team::Ally, config.allies))
            .chain(std::iter::repeat_n(Team::Adversary, config.adversaries));
        for (id, team) in teams.enumerate() {
            let position = if id == 0 && team == Team::Leader && episode_index == 0 {
                Cell::new(width / 2, height / 2)
            } else {
                centred_cell(width, height, &occupied, &mut rng)
            };
            occupied[position.y * width + position.x] = true;
            agents.push(AgentState {
                id,
                team,
                position,
                collected: 0,
                reward: RewardBreakdown::default(),
            });
        }

        let initial_resources = resources.iter().filter(|&&r| r).count();
        Ok(Self {
            width,
            height,
            resources,
            agents,
            timestep: 0,
            rng_seed,
            rng,
            initial_resources,
        })
    }

    /// Builds a world with explicit resources and agent positions. Agent
    /// ids follow the order of `agents`.
    pub fn from_layout(
        width: usize,
        height: usize,
        resources: &[Cell],
        agents: &[(Team, Cell)],
        seed: u64,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::GridTooSmall { width, height });
        }
        let check = |c: Cell| {
            if c.x < width && c.y < height {
                Ok(c)
            } else {
                Err(GridError::OutOfBounds {
                    x: c.x,
                    y: c.y,
                    width,
                    height,
                })
            }
        };
        let mut grid = vec![false; width * height];
        for &c in resources {
            let c = check(c)?;
            grid[c.y * width + c.x] = true;
        }
        let agents = agents
            .iter()
            .enumerate()
            .map(|(id, &(team, position))| {
                Ok(AgentState {
                    id,
                    team,
                    position: check(position)?,
                    collected: 0,
                    reward: RewardBreakdown::default(),
                })
            })
            .collect::<Result<Vec<_>, GridError>>()?;
        let initial_resources = grid.iter().filter(|&&r| r).count();
        Ok(Self {
            width,
            height,
            resources: grid,
            agents,
            timestep: 0,
            rng_seed: seed,
            rng: <SimRng as rand::SeedableRng>::seed_from_u64(seed),
            initial_resources,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Largest Manhattan distance between two cells of this grid.
    pub fn max_distance(&self) -> usize {
        (self.width - 1) + (self.height - 1)
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, id: usize) -> Result<&AgentState, GridError> {
        self.agents.get(id).ok_or(GridError::UnknownAgent(id))
    }

    pub fn agent_mut(&mut self, id: usize) -> Result<&mut AgentState, GridError> {
        self.agents.get_mut(id).ok_or(GridError::UnknownAgent(id))
    }

    pub fn has_resource(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height && self.resources[cell.y * self.width + cell.x]
    }

    pub fn resources_remaining(&self) -> usize {
        self.resources.iter().filter(|&&r| r).count()
    }

    pub fn initial_resources(&self) -> usize {
        self.initial_resources
    }

    /// The generator owned by this episode (turn order, adversary walks).
    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Uniformly shuffled agent ids for the current timestep.
    pub fn turn_order(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        order.shuffle(&mut self.rng);
        order
    }

    pub fn advance_timestep(&mut self) {
        self.timestep += 1;
    }

    /// Moves one agent a single cell. Moves into the border leave the agent
    /// in place; either way a resource on the destination is collected.
    pub fn step_agent(&mut self, id: usize, action: Action) -> Result<MoveOutcome, GridError> {
        let (width, height) = (self.width, self.height);
        let agent = self.agents.get_mut(id).ok_or(GridError::UnknownAgent(id))?;
        let (dx, dy) = action.delta();
        let nx = agent.position.x as i64 + dx;
        let ny = agent.position.y as i64 + dy;
        if (0..width as i64).contains(&nx) && (0..height as i64).contains(&ny) {
            agent.position = Cell::new(nx as usize, ny as usize);
        }
        let position = agent.position;
        let slot = &mut self.resources[position.y * width + position.x];
        let collected = *slot;
        if collected {
            *slot = false;
            agent.collected += 1;
        }
        Ok(MoveOutcome { position, collected })
    }

    /// The `(2r+1)²` window around an agent. Cells past the border read 0.
    pub fn observe(&self, id: usize, radius: usize) -> Result<Observation, GridError> {
        let me = self.agent(id)?;
        let mut obs = Observation::empty(radius);
        let r = radius as i64;
        let (cx, cy) = (me.position.x as i64, me.position.y as i64);
        let side = obs.side();

        let y_lo = (cy - r).max(0);
        let y_hi = (cy + r).min(self.height as i64 - 1);
        let x_lo = (cx - r).max(0);
        let x_hi = (cx + r).min(self.width as i64 - 1);
        for y in y_lo..=y_hi {
            let row = (y - cy + r) as usize;
            let base = y as usize * self.width;
            for x in x_lo..=x_hi {
                if self.resources[base + x as usize] {
                    let col = (x - cx + r) as usize;
                    obs.data[(Observation::RESOURCES * side + row) * side + col] = 1;
                }
            }
        }
        for other in &self.agents {
            if other.id == id {
                continue;
            }
            let dx = other.position.x as i64 - cx;
            let dy = other.position.y as i64 - cy;
            if dx.abs() > r || dy.abs() > r {
                continue;
            }
            let channel = if other.team.is_friendly() {
                Observation::FRIENDS
            } else {
                Observation::ADVERSARIES
            };
            obs.set(channel, (dy + r) as usize, (dx + r) as usize, true);
        }
        Ok(obs)
    }

    /// Positions of friendly agents other than `id`.
    pub fn friendly_positions_except(&self, id: usize) -> Vec<Cell> {
        self.agents
            .iter()
            .filter(|a| a.id != id && a.team.is_friendly())
            .map(|a| a.position)
            .collect()
    }

    pub fn adversary_positions(&self) -> Vec<Cell> {
        self.agents
            .iter()
            .filter(|a| a.team == Team::Adversary)
            .map(|a| a.position)
            .collect()
    }

    /// Total resources collected by each side: `(friendly, adversary)`.
    pub fn team_totals(&self) -> (u32, u32) {
        self.agents.iter().fold((0, 0), |(f, a), agent| {
            if agent.team.is_friendly() {
                (f + agent.collected, a)
            } else {
                (f, a + agent.collected)
            }
        })
    }
}

/// Per-axis rounded Gaussian around the centre with sd = side/6, resampled
/// until it lands in bounds on a free cell.
fn centred_cell(width: usize, height: usize, occupied: &[bool], rng: &mut SimRng) -> Cell {
    const MAX_TRIES: usize = 100_000;
    let gx = Normal::new((width / 2) as f64, width as f64 / 6.0).expect("finite sd");
    let gy = Normal::new((height / 2) as f64, height as f64 / 6.0).expect("finite sd");
    for _ in 0..MAX_TRIES {
        let x = gx.sample(rng).round();
        let y = gy.sample(rng).round();
        if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
            continue;
        }
        let (x, y) = (x as usize, y as usize);
        if !occupied[y * width + x] {
            return Cell::new(x, y);
        }
    }
    // Near-full grids: fall back to a uniform draw over the free cells.
    let free: Vec<usize> = (0..width * height).filter(|&i| !occupied[i]).collect();
    let i = free[rng.random_range(0..free.len())];
    Cell::new(i % width, i / width)
}
