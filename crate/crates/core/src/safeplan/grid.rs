//! Gridworld configuration and its precomputed safety structure.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::calibrate::parse_num;
use crate::error::{invalid, parse_err, Result};
use crate::rng::{domain, keyed_rng};

/// Cell coordinates; `y` grows downwards (row index of the map).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Moves in tie-breaking order.
pub const ACTIONS: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// Base score of recoverable and unrecoverable states before noise.
pub const RECOVERABLE_SCORE: f64 = 0.1;
pub const UNRECOVERABLE_SCORE: f64 = 0.9;

/// Map and dynamics parameters.
///
/// Text form: `key = value` lines for `horizon`, `epsilon`, `sigma` and
/// `seed`, then a line `map` followed by the rows of the grid (`.` free, `#`
/// obstacle, `G` goal, `S` start). Lines starting with `//` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<Cell>,
    pub goal: Cell,
    pub starts: Vec<Cell>,
    pub horizon: usize,
    /// Probability of a uniformly random move instead of the greedy one.
    pub epsilon: f64,
    /// Standard deviation of the score noise.
    pub sigma: f64,
    /// Seed of the per-state score noise.
    pub seed: u64,
}

impl GridConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut epsilon = None;
        let mut sigma = None;
        let mut seed = None;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut map_line = None;
        for (line, l) in lines.by_ref() {
            if l.is_empty() || l.starts_with("//") {
                continue;
            }
            if l == "map" {
                map_line = Some(line);
                break;
            }
            let (key, value) = l
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected `key = value`, found `{l}`")))?;
            let value = value.trim();
            match key.trim() {
                "horizon" => horizon = Some(parse_num::<usize>(line, value)?),
                "epsilon" => epsilon = Some(parse_num::<f64>(line, value)?),
                "sigma" => sigma = Some(parse_num::<f64>(line, value)?),
                "seed" => seed = Some(parse_num::<u64>(line, value)?),
                other => return Err(parse_err(line, format!("unknown parameter `{other}`"))),
            }
        }
        let map_line = map_line.ok_or_else(|| parse_err(text.lines().count().max(1), "missing `map` section"))?;
        let rows: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(parse_err(map_line, "empty map"));
        }
        let width = rows[0].1.chars().count();
        let mut obstacles = Vec::new();
        let mut starts = Vec::new();
        let mut goal = None;
        for (y, &(line, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(parse_err(line, format!("row has {} cells, expected {width}", row.chars().count())));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = Cell::new(x, y);
                match ch {
                    '.' => {}
                    '#' => obstacles.push(cell),
                    'S' => starts.push(cell),
                    'G' if goal.is_none() => goal = Some(cell),
                    'G' => return Err(parse_err(line, "more than one goal")),
                    other => return Err(parse_err(line, format!("unknown map character `{other}`"))),
                }
            }
        }
        let missing = |name: &str| parse_err(map_line, format!("missing parameter `{name}`"));
        Ok(Self {
            width,
            height: rows.len(),
            obstacles,
            goal: goal.ok_or_else(|| parse_err(map_line, "map has no goal"))?,
            starts,
            horizon: horizon.ok_or_else(|| missing("horizon"))?,
            epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
            sigma: sigma.ok_or_else(|| missing("sigma"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "horizon = {}\nepsilon = {}\nsigma = {}\nseed = {}\nmap\n",
            self.horizon, self.epsilon, self.sigma, self.seed
        );
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                out.push(if c == self.goal {
                    'G'
                } else if self.obstacles.contains(&c) {
                    '#'
                } else if self.starts.contains(&c) {
                    'S'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

fn trap_rows_text(epsilon: f64, sigma: f64, seed: u64) -> String {
    let mut text = format!("horizon = 40\nepsilon = {epsilon}\nsigma = {sigma}\nseed = {seed}\nmap\n");
    for pair in 0..16 {
        text.push_str("S.#.........\n");
        text.push_str(if pair == 15 { "...........G\n" } else { "............\n" });
    }
    text
}

impl GridConfig {
    /// Names accepted by [`GridConfig::preset`].
    pub const PRESETS: [&'static str; 2] = ["trap-rows", "heavy-noise"];

    /// 12x32 grid of starts beside obstacles, every other row, with the goal
    /// in the far corner. Random moves from a start often hit the obstacle, so
    /// the unsafety constraint binds at intermediate thresholds.
    pub fn trap_rows() -> Self {
        Self::parse(&trap_rows_text(0.2, 0.3, 1)).expect("preset parses")
    }

    /// The trap-rows map with score noise so heavy that `gamma = 0.5`
    /// misses most collisions.
    pub fn heavy_noise() -> Self {
        Self::parse(&trap_rows_text(0.1, 1.0, 2)).expect("preset parses")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "trap-rows" => Ok(Self::trap_rows()),
            "heavy-noise" => Ok(Self::heavy_noise()),
            _ => Err(invalid(format!(
                "unknown grid preset `{name}`, expected one of {}",
                Self::PRESETS.join(", ")
            ))),
        }
    }
}

/// A validated grid with recoverability and scores precomputed per cell.
#[derive(Debug, Clone)]
pub struct Gridworld {
    config: GridConfig,
    blocked: Vec<bool>,
    recoverable: Vec<bool>,
    scores: Vec<f64>,
}

impl Gridworld {
    pub fn new(config: GridConfig) -> Result<Self> {
        let (w, h) = (config.width, config.height);
        if w == 0 || h == 0 {
            return Err(invalid("the grid must be nonempty"));
        }
        if config.horizon == 0 {
            return Err(invalid("the horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&config.epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1], got {}", config.epsilon)));
        }
        if !(config.sigma >= 0.0 && config.sigma.is_finite()) {
            return Err(invalid(format!("sigma must be nonnegative, got {}", config.sigma)));
        }
        let inside = |c: &Cell| c.x < w && c.y < h;
        if !inside(&config.goal) || !config.obstacles.iter().all(inside) || !config.starts.iter().all(inside) {
            return Err(invalid("cells must lie inside the grid"));
        }
        let mut blocked = vec![false; w * h];
        for c in &config.obstacles {
            blocked[c.y * w + c.x] = true;
        }
        if blocked[config.goal.y * w + config.goal.x] {
            return Err(invalid("the goal is an obstacle"));
        }
        if config.starts.is_empty() {
            return Err(invalid("at least one start cell is required"));
        }
        let mut world = Self {
            config,
            blocked,
            recoverable: Vec::new(),
            scores: Vec::new(),
        };
        world.recoverable = (0..w * h).map(|i| world.compute_recoverable(world.cell_at(i))).collect();
        if let Some(s) = world.config.starts.iter().find(|s| !world.recoverable[world.index(**s)]) {
            return Err(invalid(format!("start cell {s} is not recoverable")));
        }
        world.scores = (0..w * h)
            .map(|i| {
                let base = if world.recoverable[i] {
                    RECOVERABLE_SCORE
                } else {
                    UNRECOVERABLE_SCORE
                };
                let z: f64 = StandardNormal.sample(&mut keyed_rng(world.config.seed, domain::SCORE_NOISE, i as u64));
                (base + world.config.sigma * z).clamp(0.0, 1.0)
            })
            .collect();
        Ok(world)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    fn index(&self, c: Cell) -> usize {
        c.y * self.config.width + c.x
    }

    fn cell_at(&self, i: usize) -> Cell {
        Cell::new(i % self.config.width, i / self.config.width)
    }

    fn check(&self, c: Cell) -> Result<()> {
        if c.x >= self.config.width || c.y >= self.config.height {
            return Err(invalid(format!("cell {c} lies outside the grid")));
        }
        Ok(())
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.blocked[self.index(c)]
    }

    pub fn goal(&self) -> Cell {
        self.config.goal
    }

    pub fn starts(&self) -> &[Cell] {
        &self.config.starts
    }

    /// Result of moving from `c` by action `a`; moves off the grid stay put.
    pub fn step(&self, c: Cell, a: usize) -> Cell {
        let (dx, dy) = ACTIONS[a];
        let x = c.x as i64 + dx;
        let y = c.y as i64 + dy;
        if x < 0 || y < 0 || x >= self.config.width as i64 || y >= self.config.height as i64 {
            c
        } else {
            Cell::new(x as usize, y as usize)
        }
    }

    /// First action, in [`ACTIONS`] order, that brings `c` closer to the goal.
    pub fn greedy_action(&self, c: Cell) -> usize {
        let d = c.manhattan(self.config.goal);
        (0..ACTIONS.len())
            .find(|&a| self.step(c, a).manhattan(self.config.goal) < d)
            .unwrap_or(0)
    }

    fn compute_recoverable(&self, c: Cell) -> bool {
        if self.is_obstacle(c) {
            return false;
        }
        if c == self.config.goal {
            return true;
        }
        if self.config.epsilon > 0.0 {
            (0..ACTIONS.len()).all(|a| !self.is_obstacle(self.step(c, a)))
        } else {
            !self.is_obstacle(self.step(c, self.greedy_action(c)))
        }
    }

    /// True when every move the nominal policy makes from `c` with nonzero
    /// probability stays out of obstacles.
    pub fn is_recoverable(&self, c: Cell) -> Result<bool> {
        self.check(c)?;
        Ok(self.recoverable[self.index(c)])
    }

    /// Classifier score at `c`: high means predicted unrecoverable.
    pub fn score(&self, c: Cell) -> Result<f64> {
        self.check(c)?;
        Ok(self.scores[self.index(c)])
    }

    pub(crate) fn score_unchecked(&self, c: Cell) -> f64 {
        self.scores[self.index(c)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CORRIDOR: &str = "\
horizon = 20
epsilon = 0
sigma = 0
seed = 1
map
S..#
...G
";

    #[test]
    fn parses_and_round_trips() {
        let cfg = GridConfig::parse(CORRIDOR).unwrap();
        assert_eq!((cfg.width, cfg.height), (4, 2));
        assert_eq!(cfg.goal, Cell::new(3, 1));
        assert_eq!(cfg.obstacles, vec![Cell::new(3, 0)]);
        assert_eq!(cfg.starts, vec![Cell::new(0, 0)]);
        assert_eq!(GridConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = GridConfig::parse("horizon = 5\nepsilon = x\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let err = GridConfig::parse("horizon = 5\nepsilon = 0\nsigma = 0\nseed = 1\nmap\nS.\n.G.\n").unwrap_err();
        assert!(err.to_string().starts_with("line 7:"), "{err}");
        assert!(GridConfig::parse("horizon = 5\nmap\nSG\n").is_err());
    }

    #[test]
    fn greedy_moves_and_recoverability() {
        let world = Gridworld::new(GridConfig::parse(CORRIDOR).unwrap()).unwrap();
        // from (2, 0) the greedy move is right, into the obstacle
        assert_eq!(world.greedy_action(Cell::new(2, 0)), 1);
        assert!(!world.is_recoverable(Cell::new(2, 0)).unwrap());
        assert!(world.is_recoverable(Cell::new(0, 0)).unwrap());
        assert!(world.is_recoverable(Cell::new(3, 1)).unwrap());
        assert!(!world.is_recoverable(Cell::new(3, 0)).unwrap());
        assert!(world.is_recoverable(Cell::new(9, 9)).is_err());
        assert_eq!(world.score(Cell::new(2, 0)).unwrap(), UNRECOVERABLE_SCORE);
        assert_eq!(world.score(Cell::new(0, 0)).unwrap(), RECOVERABLE_SCORE);
        assert_eq!(world.step(Cell::new(0, 0), 0), Cell::new(0, 0));
    }

    #[test]
    fn random_moves_make_obstacle_neighbours_unrecoverable() {
        let text = CORRIDOR.replace("epsilon = 0", "epsilon = 0.1");
        let mut cfg = GridConfig::parse(&text).unwrap();
        cfg.starts = vec![Cell::new(0, 1)];
        let world = Gridworld::new(cfg).unwrap();
        // (2, 1) has no obstacle neighbour; (2, 0) borders (3, 0)
        assert!(world.is_recoverable(Cell::new(2, 1)).unwrap());
        assert!(!world.is_recoverable(Cell::new(2, 0)).unwrap());
        assert!(world.is_recoverable(Cell::new(1, 0)).unwrap());
    }

    #[test]
    fn unrecoverable_start_is_rejected() {
        let text = CORRIDOR.replace("S..#", "..S#");
        assert!(Gridworld::new(GridConfig::parse(&text).unwrap()).is_err());
    }

    #[test]
    fn noisy_scores_are_reproducible_and_clamped() {
        let text = CORRIDOR.replace("sigma = 0", "sigma = 2");
        let a = Gridworld::new(GridConfig::parse(&text).unwrap()).unwrap();
        let b = Gridworld::new(GridConfig::parse(&text).unwrap()).unwrap();
        assert_eq!(a.scores, b.scores);
        assert!(a.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        assert!(a.scores.iter().any(|&s| s != RECOVERABLE_SCORE && s != UNRECOVERABLE_SCORE));
    }
}
