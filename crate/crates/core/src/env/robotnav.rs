//! RobotNav: a point robot in a walled rectangular arena must reach a goal
//! disc while avoiding axis-aligned rectangular obstacles.
//!
//! The default goal-relative action set re-aims the robot at the goal after
//! every move: toward the goal, away from it, or sideways along either
//! perpendicular. A move that would leave the arena or touch an obstacle is
//! cancelled and penalised.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;

use super::{EnvError, Environment, Transition};
use crate::tree::{ActionId, FeatureSpace};

pub const GOAL_RELATIVE_ACTIONS: [&str; 4] = ["toward", "away", "right", "left"];
pub const CARDINAL_ACTIONS: [&str; 4] = ["east", "west", "north", "south"];

const START_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Closest point of the (closed) rectangle to `(x, y)`.
    pub fn closest_point(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x0, self.x1), y.clamp(self.y0, self.y1))
    }

    /// Whether the segment from `a` to `b` touches the closed rectangle.
    pub fn intersects_segment(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        self.segment_entry(a, b).is_some()
    }

    /// Fraction of the way from `a` to `b` at which the segment first touches
    /// the closed rectangle (Liang-Barsky clipping).
    pub fn segment_entry(&self, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        for (p, q) in [
            (-dx, a.0 - self.x0),
            (dx, self.x1 - a.0),
            (-dy, a.1 - self.y0),
            (dy, self.y1 - a.1),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let t = q / p;
                if p < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSet {
    GoalRelative,
    /// Fixed compass moves. Stand-in for the classic RobotNav action set,
    /// whose exact geometry is not reproduced here.
    Cardinal,
}

impl ActionSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            ActionSet::GoalRelative => &GOAL_RELATIVE_ACTIONS,
            ActionSet::Cardinal => &CARDINAL_ACTIONS,
        }
    }
}

impl std::str::FromStr for ActionSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "goal_relative" => Ok(Self::GoalRelative),
            "cardinal" => Ok(Self::Cardinal),
            other => Err(format!("unknown action set `{other}` (expected goal_relative or cardinal)")),
        }
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionSet::GoalRelative => "goal_relative",
            ActionSet::Cardinal => "cardinal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartRule {
    Fixed,
    UniformRandomFree,
}

impl std::str::FromStr for StartRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "uniform_random_free" => Ok(Self::UniformRandomFree),
            other => Err(format!("unknown start rule `{other}` (expected fixed or uniform_random_free)")),
        }
    }
}

impl fmt::Display for StartRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StartRule::Fixed => "fixed",
            StartRule::UniformRandomFree => "uniform_random_free",
        })
    }
}

/// Observation features the environment can expose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Euclidean distance to the goal centre.
    GoalDistance,
    /// Signed angle from the robot-to-goal line to the direction of the
    /// nearest obstacle point, in `[-pi, pi]`; positive is to the left.
    ObstacleAngle,
    /// Distance to the nearest obstacle point, clamped to the sensor range.
    ObstacleDistance,
    X,
    Y,
    GoalDx,
    GoalDy,
    /// Free distance along the straight line to the goal before it meets an
    /// obstacle, clamped to the sensor range.
    GoalClearance,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::GoalDistance,
        Feature::ObstacleAngle,
        Feature::ObstacleDistance,
        Feature::X,
        Feature::Y,
        Feature::GoalDx,
        Feature::GoalDy,
        Feature::GoalClearance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::GoalDistance => "goal_distance",
            Feature::ObstacleAngle => "obstacle_angle",
            Feature::ObstacleDistance => "obstacle_distance",
            Feature::X => "x",
            Feature::Y => "y",
            Feature::GoalDx => "goal_dx",
            Feature::GoalDy => "goal_dy",
            Feature::GoalClearance => "goal_clearance",
        }
    }
}

impl std::str::FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotNavConfig {
    pub width: f64,
    pub height: f64,
    pub goal: (f64, f64),
    pub goal_radius: f64,
    pub obstacles: Vec<Rect>,
    pub step_size: f64,
    pub max_episode_steps: usize,
    pub action_set: ActionSet,
    pub step_reward: f64,
    pub collision_penalty: f64,
    pub goal_reward: f64,
    pub start_rule: StartRule,
    /// Used by [`StartRule::Fixed`].
    pub start: (f64, f64),
    pub features: Vec<Feature>,
    pub sensor_range: f64,
}

impl Default for RobotNavConfig {
    fn default() -> Self {
        Self {
            width: 20.0,
            height: 20.0,
            goal: (16.0, 10.0),
            goal_radius: 1.0,
            obstacles: vec![Rect::new(8.0, 6.5, 9.0, 13.5), Rect::new(12.0, 1.5, 13.0, 7.0)],
            step_size: 1.0,
            max_episode_steps: 200,
            action_set: ActionSet::GoalRelative,
            step_reward: -1.0,
            collision_penalty: -4.0,
            goal_reward: 0.0,
            start_rule: StartRule::UniformRandomFree,
            start: (3.0, 10.0),
            features: vec![
                Feature::GoalDistance,
                Feature::ObstacleAngle,
                Feature::ObstacleDistance,
                Feature::X,
                Feature::Y,
            ],
            sensor_range: 5.0,
        }
    }
}

impl RobotNavConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let err = |m: String| Err(EnvError::Config(m));
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return err(format!("arena must have positive size, got {}x{}", self.width, self.height));
        }
        if !(self.step_size > 0.0) {
            return err(format!("step size must be positive, got {}", self.step_size));
        }
        if self.max_episode_steps < 1 {
            return err("max episode steps must be at least 1".into());
        }
        if !(self.goal_radius > 0.0) {
            return err(format!("goal radius must be positive, got {}", self.goal_radius));
        }
        if !(self.sensor_range > 0.0) {
            return err(format!("sensor range must be positive, got {}", self.sensor_range));
        }
        if self.features.is_empty() {
            return err("at least one observation feature is required".into());
        }
        for v in [self.step_reward, self.collision_penalty, self.goal_reward] {
            if !v.is_finite() {
                return err("rewards must be finite".into());
            }
        }
        if !self.in_arena(self.goal.0, self.goal.1) {
            return err(format!("goal {:?} is outside the arena", self.goal));
        }
        if self.blocked_point(self.goal.0, self.goal.1) {
            return err(format!("goal {:?} lies inside an obstacle", self.goal));
        }
        if self.start_rule == StartRule::Fixed {
            let (x, y) = self.start;
            if !self.in_arena(x, y) || self.blocked_point(x, y) {
                return err(format!("start {:?} is outside the arena or inside an obstacle", self.start));
            }
            if self.at_goal(x, y) {
                return err(format!("start {:?} is already inside the goal radius", self.start));
            }
        }
        Ok(())
    }

    fn in_arena(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.height).contains(&y)
    }

    fn blocked_point(&self, x: f64, y: f64) -> bool {
        self.obstacles.iter().any(|r| r.contains(x, y))
    }

    fn at_goal(&self, x: f64, y: f64) -> bool {
        (x - self.goal.0).hypot(y - self.goal.1) <= self.goal_radius
    }

    pub fn feature_bounds(&self, feature: Feature) -> (f64, f64) {
        match feature {
            Feature::GoalDistance => (0.0, self.width.hypot(self.height)),
            Feature::ObstacleAngle => (-PI, PI),
            Feature::ObstacleDistance => (0.0, self.sensor_range),
            Feature::X => (0.0, self.width),
            Feature::Y => (0.0, self.height),
            Feature::GoalDx => (-self.width, self.width),
            Feature::GoalDy => (-self.height, self.height),
            Feature::GoalClearance => (0.0, self.sensor_range),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobotNav {
    config: RobotNavConfig,
    space: FeatureSpace,
    action_names: Vec<String>,
    position: (f64, f64),
    steps: usize,
    done: bool,
}

impl RobotNav {
    pub fn new(config: RobotNavConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let space = FeatureSpace::new(
            config.features.iter().map(|f| f.name().to_string()).collect(),
            config.features.iter().map(|&f| config.feature_bounds(f)).collect(),
        )
        .map_err(|e| EnvError::Config(e.to_string()))?;
        let action_names = config.action_set.names().iter().map(|s| s.to_string()).collect();
        Ok(Self {
            position: config.start,
            config,
            space,
            action_names,
            steps: 0,
            // step before reset is an error
            done: true,
        })
    }

    pub fn config(&self) -> &RobotNavConfig {
        &self.config
    }

    pub fn position(&self) -> (f64, f64) {
        self.position
    }

    pub fn episode_steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Places the robot at `position` and starts a fresh episode there.
    pub fn set_position(&mut self, position: (f64, f64)) -> Result<Vec<f64>, EnvError> {
        let (x, y) = position;
        if !self.config.in_arena(x, y) || self.config.blocked_point(x, y) {
            return Err(EnvError::Config(format!("position {position:?} is not free")));
        }
        self.position = position;
        self.steps = 0;
        self.done = self.config.at_goal(x, y);
        Ok(self.observe())
    }

    /// Unit displacement for `action` from the current position.
    pub fn displacement(&self, action: ActionId) -> (f64, f64) {
        match self.config.action_set {
            ActionSet::GoalRelative => {
                let (gx, gy) = (self.config.goal.0 - self.position.0, self.config.goal.1 - self.position.1);
                let norm = gx.hypot(gy);
                let (dx, dy) = if norm > 0.0 { (gx / norm, gy / norm) } else { (1.0, 0.0) };
                match action.0 {
                    0 => (dx, dy),
                    1 => (-dx, -dy),
                    2 => (dy, -dx),
                    _ => (-dy, dx),
                }
            }
            ActionSet::Cardinal => match action.0 {
                0 => (1.0, 0.0),
                1 => (-1.0, 0.0),
                2 => (0.0, 1.0),
                _ => (0.0, -1.0),
            },
        }
    }

    fn goal_clearance(&self, range: f64) -> f64 {
        let (x, y) = self.position;
        let (gx, gy) = (self.config.goal.0 - x, self.config.goal.1 - y);
        let dist = gx.hypot(gy);
        if dist == 0.0 {
            return range;
        }
        let reach = range.min(dist);
        let end = (x + gx / dist * reach, y + gy / dist * reach);
        self.config
            .obstacles
            .iter()
            .filter_map(|r| r.segment_entry((x, y), end))
            .map(|t| t * reach)
            .fold(range, f64::min)
    }

    fn nearest_obstacle(&self) -> Option<((f64, f64), f64)> {
        let (x, y) = self.position;
        self.config
            .obstacles
            .iter()
            .map(|r| {
                let p = r.closest_point(x, y);
                (p, (p.0 - x).hypot(p.1 - y))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn observe(&self) -> Vec<f64> {
        let (x, y) = self.position;
        let (gx, gy) = (self.config.goal.0 - x, self.config.goal.1 - y);
        let nearest = self.nearest_obstacle();
        self.config
            .features
            .iter()
            .map(|&f| {
                let (lo, hi) = self.config.feature_bounds(f);
                let raw = match f {
                    Feature::GoalDistance => gx.hypot(gy),
                    Feature::ObstacleDistance => nearest.map_or(hi, |(_, d)| d),
                    Feature::ObstacleAngle => nearest.map_or(0.0, |((ox, oy), _)| {
                        let (vx, vy) = (ox - x, oy - y);
                        (gx * vy - gy * vx).atan2(gx * vx + gy * vy)
                    }),
                    Feature::X => x,
                    Feature::Y => y,
                    Feature::GoalDx => gx,
                    Feature::GoalDy => gy,
                    Feature::GoalClearance => self.goal_clearance(hi),
                };
                raw.clamp(lo, hi)
            })
            .collect()
    }
}

impl Environment for RobotNav {
    fn feature_space(&self) -> &FeatureSpace {
        &self.space
    }

    fn action_names(&self) -> &[String] {
        &self.action_names
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>, EnvError> {
        let position = match self.config.start_rule {
            StartRule::Fixed => self.config.start,
            StartRule::UniformRandomFree => (0..START_ATTEMPTS)
                .map(|_| {
                    (
                        rng.random_range(0.0..self.config.width),
                        rng.random_range(0.0..self.config.height),
                    )
                })
                .find(|&(x, y)| !self.config.blocked_point(x, y) && !self.config.at_goal(x, y))
                .ok_or_else(|| EnvError::Config("no free start position found".into()))?,
        };
        self.position = position;
        self.steps = 0;
        self.done = false;
        Ok(self.observe())
    }

    fn step<R: Rng + ?Sized>(&mut self, action: ActionId, _rng: &mut R) -> Result<Transition, EnvError> {
        if action.0 >= self.action_names.len() {
            return Err(EnvError::InvalidAction {
                action: action.0,
                count: self.action_names.len(),
            });
        }
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let state = self.observe();
        let (dx, dy) = self.displacement(action);
        let from = self.position;
        let to = (from.0 + self.config.step_size * dx, from.1 + self.config.step_size * dy);
        let blocked =
            !self.config.in_arena(to.0, to.1) || self.config.obstacles.iter().any(|r| r.intersects_segment(from, to));

        let mut reward = self.config.step_reward;
        if blocked {
            reward += self.config.collision_penalty;
        } else {
            self.position = to;
        }
        self.steps += 1;
        let reached = self.config.at_goal(self.position.0, self.position.1);
        if reached {
            reward += self.config.goal_reward;
        }
        self.done = reached || self.steps >= self.config.max_episode_steps;
        Ok(Transition {
            state,
            action,
            reward,
            next_state: self.observe(),
            done: self.done,
            terminal: reached,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_arena() -> RobotNavConfig {
        RobotNavConfig {
            obstacles: vec![],
            goal: (6.0, 2.0),
            start_rule: StartRule::Fixed,
            start: (2.0, 2.0),
            ..RobotNavConfig::default()
        }
    }

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
    }

    #[test]
    fn goal_relative_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let expected = [(3.0, 2.0), (1.0, 2.0), (2.0, 1.0), (2.0, 3.0)];
        for (a, want) in expected.into_iter().enumerate() {
            let mut env = RobotNav::new(open_arena()).unwrap();
            env.reset(&mut rng).unwrap();
            let t = env.step(ActionId(a), &mut rng).unwrap();
            assert!(close(env.position(), want), "action {a}: {:?}", env.position());
            assert_eq!(t.reward, -1.0);
        }
    }

    #[test]
    fn blocked_move_is_penalised() {
        let mut cfg = open_arena();
        cfg.obstacles = vec![Rect::new(2.5, 0.0, 3.5, 4.0)];
        let mut env = RobotNav::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng).unwrap();
        let t = env.step(ActionId(0), &mut rng).unwrap();
        assert_eq!(env.position(), (2.0, 2.0));
        assert_eq!(t.reward, -5.0);
        assert!(!t.done);
    }

    #[test]
    fn walls_block() {
        let mut cfg = open_arena();
        cfg.start = (0.5, 2.0);
        let mut env = RobotNav::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng).unwrap();
        let t = env.step(ActionId(1), &mut rng).unwrap();
        assert_eq!(env.position(), (0.5, 2.0));
        assert_eq!(t.reward, -5.0);
    }

    #[test]
    fn reaching_goal_ends_episode() {
        let mut env = RobotNav::new(open_arena()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng).unwrap();
        let mut last = None;
        for _ in 0..3 {
            last = Some(env.step(ActionId(0), &mut rng).unwrap());
        }
        let t = last.unwrap();
        assert!(t.done && t.terminal);
        assert_eq!(env.step(ActionId(0), &mut rng), Err(EnvError::EpisodeOver));
    }

    #[test]
    fn timeout_is_not_terminal() {
        let mut cfg = open_arena();
        cfg.max_episode_steps = 2;
        let mut env = RobotNav::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng).unwrap();
        assert!(!env.step(ActionId(2), &mut rng).unwrap().done);
        let t = env.step(ActionId(2), &mut rng).unwrap();
        assert!(t.done && !t.terminal);
    }

    #[test]
    fn invalid_action() {
        let mut env = RobotNav::new(open_arena()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng).unwrap();
        assert_eq!(
            env.step(ActionId(4), &mut rng),
            Err(EnvError::InvalidAction { action: 4, count: 4 })
        );
    }

    #[test]
    fn fixed_start_is_repeatable() {
        let mut env = RobotNav::new(open_arena()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = env.reset(&mut rng).unwrap();
        env.step(ActionId(0), &mut rng).unwrap();
        assert_eq!(env.reset(&mut rng).unwrap(), a);
    }

    #[test]
    fn observation_at_goal_and_without_obstacles() {
        let mut env = RobotNav::new(open_arena()).unwrap();
        let obs = env.set_position((6.0, 2.0)).unwrap();
        assert_eq!(obs[0], 0.0);
        assert_eq!(obs[1], 0.0);
        assert_eq!(obs[2], 5.0);
    }

    #[test]
    fn obstacle_angle_sign() {
        // goal to the east, obstacle to the north-east: positive (left) angle
        let mut cfg = open_arena();
        cfg.obstacles = vec![Rect::new(3.0, 3.0, 4.0, 4.0)];
        let mut env = RobotNav::new(cfg).unwrap();
        let obs = env.set_position((2.0, 2.0)).unwrap();
        assert!((obs[1] - PI / 4.0).abs() < 1e-12);
        assert!((obs[2] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn segment_clipping() {
        let r = Rect::new(1.0, 1.0, 2.0, 2.0);
        assert!(r.intersects_segment((0.0, 1.5), (3.0, 1.5)));
        assert!(r.intersects_segment((0.0, 0.0), (1.0, 1.0)));
        assert!(!r.intersects_segment((0.0, 0.0), (0.9, 3.0)));
        assert!(!r.intersects_segment((0.0, 2.5), (3.0, 2.5)));
        // diagonal cutting the corner without either endpoint inside
        assert!(r.intersects_segment((0.5, 1.4), (1.2, 2.1)));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = open_arena();
        cfg.start = (3.0, 2.0);
        cfg.obstacles = vec![Rect::new(2.5, 1.0, 3.5, 3.0)];
        assert!(RobotNav::new(cfg).is_err());
        let mut cfg = open_arena();
        cfg.goal = (30.0, 2.0);
        assert!(RobotNav::new(cfg).is_err());
        let mut cfg = open_arena();
        cfg.step_size = 0.0;
        assert!(RobotNav::new(cfg).is_err());
        let mut cfg = open_arena();
        cfg.max_episode_steps = 0;
        assert!(RobotNav::new(cfg).is_err());
    }

    #[test]
    fn cardinal_actions() {
        let mut cfg = open_arena();
        cfg.action_set = ActionSet::Cardinal;
        let mut env = RobotNav::new(cfg).unwrap();
        assert_eq!(env.action_names(), &["east", "west", "north", "south"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng).unwrap();
        env.step(ActionId(2), &mut rng).unwrap();
        assert!(close(env.position(), (2.0, 3.0)));
    }
}
