use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};

pub const NOOP: usize = 0;
pub const THRUST_UP: usize = 1;
pub const THRUST_LEFT: usize = 2;
pub const THRUST_RIGHT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanderParams {
    /// Subtracted from vy every tick.
    pub gravity: f64,
    /// Velocity change applied by a thrust action.
    pub thrust: f64,
    pub fuel_cost: f64,
    /// Position integration step: `pos += vel * dt`.
    pub dt: f64,
    pub pad_half_width: f64,
    /// Touchdown succeeds only if both |vx| and |vy| are below this.
    pub safe_speed: f64,
    pub start_altitude: f64,
    /// Initial x is uniform in `[-start_offset, start_offset]`.
    pub start_offset: f64,
    pub arena_half_width: f64,
    pub ceiling: f64,
    pub horizon: usize,
}

impl Default for LanderParams {
    fn default() -> Self {
        Self {
            gravity: 0.05,
            thrust: 0.1,
            fuel_cost: 0.03,
            dt: 0.1,
            pad_half_width: 0.2,
            safe_speed: 0.1,
            start_altitude: 1.0,
            start_offset: 0.4,
            arena_half_width: 1.5,
            ceiling: 2.0,
            horizon: 300,
        }
    }
}

/// Point-mass lander over a pad at the origin.
///
/// Per tick the reward is the decrease in distance to the pad, minus a fuel
/// cost for each thrust action, plus +1 for a slow touchdown on the pad or -1
/// for any other touchdown or for leaving the arena. The sum is clipped to
/// `[-1, 1]` so `R_max = 1`.
#[derive(Debug, Clone)]
pub struct MiniLander {
    params: LanderParams,
    state: [f64; 4],
    t: usize,
    done: bool,
}

pub const LANDER_R_MAX: f64 = 1.0;

impl MiniLander {
    pub fn new(params: LanderParams) -> Result<Self> {
        if params.horizon == 0 {
            return Err(Error::Config("lander horizon must be >= 1".into()));
        }
        if params.dt <= 0.0 || params.start_altitude <= 0.0 {
            return Err(Error::Config("lander dt and start altitude must be > 0".into()));
        }
        Ok(Self {
            params,
            state: [0.0; 4],
            t: 0,
            done: true,
        })
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    fn distance(&self) -> f64 {
        self.state[0].hypot(self.state[1])
    }
}

impl Environment for MiniLander {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 4,
            action_count: 4,
            r_max: LANDER_R_MAX,
            horizon: self.params.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.params.start_offset;
        let x = if w > 0.0 { rng.gen_range(-w..=w) } else { 0.0 };
        self.state = [x, self.params.start_altitude, 0.0, 0.0];
        self.t = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; reset first".into()));
        }
        let p = &self.params;
        let before = self.distance();
        let [mut x, mut y, mut vx, mut vy] = self.state;
        let mut reward = 0.0;
        match action {
            NOOP => {}
            THRUST_UP => vy += p.thrust,
            THRUST_LEFT => vx -= p.thrust,
            THRUST_RIGHT => vx += p.thrust,
            other => {
                return Err(Error::Usage(format!(
                    "action {other} out of range for lander (4 actions)"
                )))
            }
        }
        if action != NOOP {
            reward -= p.fuel_cost;
        }
        vy -= p.gravity;
        x += vx * p.dt;
        y += vy * p.dt;

        let mut terminated = false;
        if y <= 0.0 {
            y = 0.0;
            terminated = true;
            let soft = vx.abs() < p.safe_speed && vy.abs() < p.safe_speed;
            reward += if soft && x.abs() <= p.pad_half_width {
                1.0
            } else {
                -1.0
            };
        } else if x.abs() > p.arena_half_width || y > p.ceiling {
            terminated = true;
            reward -= 1.0;
        }
        self.state = [x, y, vx, vy];
        reward += before - self.distance();
        let reward = reward.clamp(-LANDER_R_MAX, LANDER_R_MAX);

        self.t += 1;
        let truncated = !terminated && self.t >= p.horizon;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward,
            terminated,
            truncated,
        })
    }
}
