//! UAV data collection on a grid.
//!
//! Each UAV flies one cell per step (or hovers) at a fixed altitude and
//! polls one IoT device. A polled device transmits with exactly the power
//! needed to reach the SNR threshold at its UAV; if that exceeds the device
//! budget the upload fails. The team is penalised by the mean
//! age-of-information plus the power factor times the power spent.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_joint_action, dbm_to_watts, Fingerprint, MultiAgentEnv, Step};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, StreamRng};

pub const NUM_DIRECTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
    Hover,
}

impl Direction {
    pub const ALL: [Direction; NUM_DIRECTIONS] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
        Direction::Hover,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// (row, col) offset; north increases the row index.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::North => (1, 0),
            Direction::South => (-1, 0),
            Direction::East => (0, 1),
            Direction::West => (0, -1),
            Direction::Hover => (0, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UavAction {
    pub direction: Direction,
    pub device: usize,
}

impl UavAction {
    pub fn encode(self, num_devices: usize) -> usize {
        self.direction.index() * num_devices + self.device
    }

    pub fn decode(id: usize, num_devices: usize) -> Result<Self> {
        if id >= NUM_DIRECTIONS * num_devices {
            return Err(Error::contract(format!(
                "action id {id} outside [0, {})",
                NUM_DIRECTIONS * num_devices
            )));
        }
        Ok(Self {
            direction: Direction::ALL[id / num_devices],
            device: id % num_devices,
        })
    }
}

/// One member of the reward family: dynamics are shared, only the power
/// factor changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub power_factor: f64,
}

pub fn make_task(power_factor: f64) -> Result<TaskSpec> {
    if !(power_factor.is_finite() && power_factor >= 0.0) {
        return Err(Error::contract(format!(
            "power factor must be finite and non-negative, got {power_factor}"
        )));
    }
    Ok(TaskSpec { power_factor })
}

/// Five log-spaced power factors from 0.1 to 10.
pub fn default_task_family() -> Vec<TaskSpec> {
    (0..5)
        .map(|i| TaskSpec {
            power_factor: 10f64.powf(-1.0 + 0.5 * i as f64),
        })
        .collect()
}

/// Held-out power factor for adaptation; not a member of the default family.
pub const DEFAULT_TEST_POWER_FACTOR: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub area_side_m: f64,
    pub grid_cells: usize,
    pub num_uavs: usize,
    pub num_devices: usize,
    pub altitude_m: f64,
    pub episode_len: usize,
    pub snr_threshold_db: f64,
    pub noise_dbm: f64,
    pub max_device_power_dbm: f64,
    pub pathloss_exponent_air: f64,
    pub power_factor: f64,
    /// Defaults to `episode_len`.
    pub aoi_cap: Option<u32>,
    /// When set, a failed upload still burns the device's full budget.
    pub failed_uplink_consumes_power: bool,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            area_side_m: 1100.0,
            grid_cells: 11,
            num_uavs: 3,
            num_devices: 15,
            altitude_m: 100.0,
            episode_len: 100,
            snr_threshold_db: 24.0,
            noise_dbm: -100.0,
            max_device_power_dbm: 23.0,
            pathloss_exponent_air: 2.3,
            power_factor: 1.0,
            aoi_cap: None,
            failed_uplink_consumes_power: false,
        }
    }
}

impl UavConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.area_side_m > 0.0 && self.altitude_m > 0.0 && self.pathloss_exponent_air > 0.0) {
            return Err(Error::config("uav: area, altitude and path-loss exponent must be positive"));
        }
        if self.grid_cells == 0 || self.num_uavs == 0 || self.num_devices == 0 || self.episode_len == 0 {
            return Err(Error::config("uav: grid, UAV, device and episode counts must be positive"));
        }
        if self.num_uavs > self.grid_cells * self.grid_cells {
            return Err(Error::config(format!(
                "uav: {} UAVs do not fit on distinct cells of a {}x{} grid",
                self.num_uavs, self.grid_cells, self.grid_cells
            )));
        }
        make_task(self.power_factor).map_err(|_| Error::config("uav.power_factor must be >= 0"))?;
        if self.aoi_cap == Some(0) {
            return Err(Error::config("uav.aoi_cap must be at least 1"));
        }
        Ok(())
    }

    pub fn cell_size_m(&self) -> f64 {
        self.area_side_m / self.grid_cells as f64
    }

    pub fn aoi_cap(&self) -> u32 {
        self.aoi_cap.unwrap_or(self.episode_len as u32)
    }

    pub fn num_actions(&self) -> usize {
        NUM_DIRECTIONS * self.num_devices
    }

    pub fn with_task(&self, task: &TaskSpec) -> Self {
        Self {
            power_factor: task.power_factor,
            ..self.clone()
        }
    }

    pub fn task(&self) -> TaskSpec {
        TaskSpec {
            power_factor: self.power_factor,
        }
    }

    /// Fingerprint of the dynamics; the power factor is left out.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v.as_object_mut().unwrap().remove("power_factor");
        v["aoi_cap"] = self.aoi_cap().into();
        v["env"] = "uav".into();
        Fingerprint::of_json(&v)
    }
}

pub fn airlink_pathloss_db(distance_3d_m: f64, config: &UavConfig) -> f64 {
    30.0 + 10.0 * config.pathloss_exponent_air * distance_3d_m.log10()
}

/// Uplink power that exactly meets the SNR threshold at `distance_3d_m`.
pub fn required_power_watts(distance_3d_m: f64, config: &UavConfig) -> f64 {
    let d = distance_3d_m.max(config.altitude_m);
    dbm_to_watts(config.noise_dbm)
        * 10f64.powf(config.snr_threshold_db / 10.0)
        * 10f64.powf(airlink_pathloss_db(d, config) / 10.0)
}

/// Team reward for one step. Dataset relabelling evaluates the identical
/// expression.
pub fn uav_reward(mean_aoi: f64, aoi_cap: f64, step_power_w: f64, power_factor: f64) -> f64 {
    -(mean_aoi / aoi_cap + power_factor * step_power_w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavState {
    /// (row, col) of each UAV.
    pub uav_cells: Vec<(usize, usize)>,
    pub device_positions: Vec<[f64; 2]>,
    pub aoi: Vec<u32>,
    pub t: usize,
    /// Accumulated device transmit power over the episode (W).
    pub power_spent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavOutcome {
    pub row: usize,
    pub col: usize,
    pub device: usize,
    /// Whether this UAV received the device's upload.
    pub success: bool,
    pub power_w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavStepDetail {
    pub t: usize,
    pub per_uav: Vec<UavOutcome>,
    pub mean_aoi: f64,
    pub step_power_w: f64,
    pub reward: f64,
}

impl UavStepDetail {
    pub fn served_devices(&self) -> Vec<usize> {
        self.per_uav
            .iter()
            .filter(|o| o.success)
            .map(|o| o.device)
            .collect()
    }
}

pub struct UavEnv {
    config: UavConfig,
    state: UavState,
    rng: StreamRng,
    last: Option<UavStepDetail>,
}

impl UavEnv {
    pub fn new(config: UavConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            state: UavState {
                uav_cells: vec![],
                device_positions: vec![],
                aoi: vec![],
                t: 0,
                power_spent: 0.0,
            },
            config,
            rng: seeded_rng(0, "uav-env"),
            last: None,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &UavConfig {
        &self.config
    }

    pub fn state(&self) -> &UavState {
        &self.state
    }

    pub fn last_detail(&self) -> Option<&UavStepDetail> {
        self.last.as_ref()
    }

    pub fn cell_center(&self, cell: (usize, usize)) -> [f64; 2] {
        let c = self.config.cell_size_m();
        [(cell.1 as f64 + 0.5) * c, (cell.0 as f64 + 0.5) * c]
    }

    /// Grid cell (row, col) containing a device.
    pub fn device_cell(&self, device: usize) -> (usize, usize) {
        let c = self.config.cell_size_m();
        let g = self.config.grid_cells;
        let p = self.state.device_positions[device];
        let idx = |v: f64| ((v / c).floor().max(0.0) as usize).min(g - 1);
        (idx(p[1]), idx(p[0]))
    }

    pub fn distance_3d(&self, cell: (usize, usize), device: usize) -> f64 {
        let u = self.cell_center(cell);
        let d = self.state.device_positions[device];
        let h2 = (u[0] - d[0]).powi(2) + (u[1] - d[1]).powi(2);
        (h2 + self.config.altitude_m.powi(2)).sqrt()
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let g = self.config.grid_cells;
        let cap = self.config.aoi_cap() as f64;
        let coord = |v: usize| {
            if g > 1 {
                2.0 * v as f64 / (g - 1) as f64 - 1.0
            } else {
                0.0
            }
        };
        let aoi: Vec<f64> = self.state.aoi.iter().map(|&a| 2.0 * a as f64 / cap - 1.0).collect();
        self.state
            .uav_cells
            .iter()
            .map(|&(r, c)| {
                let mut o = Vec::with_capacity(2 + aoi.len());
                o.push(coord(r));
                o.push(coord(c));
                o.extend_from_slice(&aoi);
                o
            })
            .collect()
    }

    fn mean_aoi(&self) -> f64 {
        self.state.aoi.iter().map(|&a| a as f64).sum::<f64>() / self.state.aoi.len() as f64
    }
}

impl MultiAgentEnv for UavEnv {
    fn num_agents(&self) -> usize {
        self.config.num_uavs
    }

    fn obs_dim(&self) -> usize {
        2 + self.config.num_devices
    }

    fn num_actions(&self) -> usize {
        self.config.num_actions()
    }

    fn episode_len(&self) -> usize {
        self.config.episode_len
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = seeded_rng(seed, "uav-env");
        let side = self.config.area_side_m;
        let g = self.config.grid_cells;
        let devices = (0..self.config.num_devices)
            .map(|_| [self.rng.random_range(0.0..side), self.rng.random_range(0.0..side)])
            .collect();
        let cells = sample(&mut self.rng, g * g, self.config.num_uavs)
            .into_iter()
            .map(|i| (i / g, i % g))
            .collect();
        self.state = UavState {
            uav_cells: cells,
            device_positions: devices,
            aoi: vec![1; self.config.num_devices],
            t: 0,
            power_spent: 0.0,
        };
        self.last = None;
        self.observe()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<Step> {
        if self.state.t >= self.config.episode_len {
            return Err(Error::contract("uav: step called after the episode ended"));
        }
        let n_dev = self.config.num_devices;
        check_joint_action(joint_action, self.config.num_uavs, self.config.num_actions())?;
        let actions: Vec<UavAction> = joint_action
            .iter()
            .map(|&id| UavAction::decode(id, n_dev))
            .collect::<Result<_>>()?;

        let g = self.config.grid_cells as i64;
        for (cell, a) in self.state.uav_cells.iter_mut().zip(&actions) {
            let (dr, dc) = a.direction.offset();
            let r = (cell.0 as i64 + dr).clamp(0, g - 1);
            let c = (cell.1 as i64 + dc).clamp(0, g - 1);
            *cell = (r as usize, c as usize);
        }

        // Nearest selecting UAV receives each polled device (ties: lower index).
        let mut receiver: Vec<Option<(usize, f64)>> = vec![None; n_dev];
        for (u, a) in actions.iter().enumerate() {
            let d = self.distance_3d(self.state.uav_cells[u], a.device);
            match receiver[a.device] {
                Some((_, best)) if best <= d => {}
                _ => receiver[a.device] = Some((u, d)),
            }
        }

        let max_power = dbm_to_watts(self.config.max_device_power_dbm);
        let mut per_uav: Vec<UavOutcome> = self
            .state
            .uav_cells
            .iter()
            .zip(&actions)
            .map(|(&(row, col), a)| UavOutcome {
                row,
                col,
                device: a.device,
                success: false,
                power_w: 0.0,
            })
            .collect();
        let mut served = vec![false; n_dev];
        let mut step_power = 0.0;
        for (device, slot) in receiver.iter().enumerate() {
            let Some((u, dist)) = *slot else { continue };
            let needed = required_power_watts(dist, &self.config);
            if needed <= max_power {
                served[device] = true;
                per_uav[u].success = true;
                per_uav[u].power_w = needed;
                step_power += needed;
            } else if self.config.failed_uplink_consumes_power {
                per_uav[u].power_w = max_power;
                step_power += max_power;
            }
        }

        let cap = self.config.aoi_cap();
        for (a, &s) in self.state.aoi.iter_mut().zip(&served) {
            *a = if s { 1 } else { (*a + 1).min(cap) };
        }
        self.state.power_spent += step_power;
        self.state.t += 1;

        let mean_aoi = self.mean_aoi();
        let cap_f = cap as f64;
        let reward = uav_reward(mean_aoi, cap_f, step_power, self.config.power_factor);
        self.last = Some(UavStepDetail {
            t: self.state.t - 1,
            per_uav,
            mean_aoi,
            step_power_w: step_power,
            reward,
        });
        Ok(Step {
            observations: self.observe(),
            reward,
            done: self.state.t == self.config.episode_len,
            info: vec![mean_aoi, cap_f, step_power],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover(device: usize, n_dev: usize) -> usize {
        UavAction {
            direction: Direction::Hover,
            device,
        }
        .encode(n_dev)
    }

    #[test]
    fn default_shapes_and_fresh_aoi() {
        let mut env = UavEnv::new(UavConfig::default()).unwrap();
        let obs = env.reset(1);
        assert_eq!(obs.len(), 3);
        assert!(obs.iter().all(|o| o.len() == 17));
        assert!(env.state().aoi.iter().all(|&a| a == 1));
        assert_eq!(env.num_actions(), 75);
        assert!(obs.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_layout() {
        let mut a = UavEnv::new(UavConfig::default()).unwrap();
        let mut b = UavEnv::new(UavConfig::default()).unwrap();
        a.reset(99);
        b.reset(99);
        assert_eq!(a.state(), b.state());
        let cells = &a.state().uav_cells;
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                assert_ne!(cells[i], cells[j]);
            }
        }
    }

    #[test]
    fn too_many_uavs_rejected() {
        let cfg = UavConfig {
            grid_cells: 1,
            num_uavs: 2,
            ..UavConfig::default()
        };
        assert!(matches!(UavEnv::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn action_codec() {
        for id in 0..75 {
            assert_eq!(UavAction::decode(id, 15).unwrap().encode(15), id);
        }
        assert!(UavAction::decode(75, 15).is_err());
    }

    #[test]
    fn pure_aging_when_every_upload_fails() {
        let cfg = UavConfig {
            max_device_power_dbm: -60.0,
            episode_len: 10,
            ..UavConfig::default()
        };
        let mut env = UavEnv::new(cfg.clone()).unwrap();
        env.reset(4);
        for step in 1..=10u32 {
            let s = env.step(&[hover(0, 15), hover(5, 15), hover(9, 15)]).unwrap();
            let expected_aoi = (1 + step).min(cfg.aoi_cap());
            assert!(env.state().aoi.iter().all(|&a| a == expected_aoi));
            assert_eq!(s.reward, -(expected_aoi as f64) / 10.0);
        }
    }

    #[test]
    fn power_directly_overhead() {
        let cfg = UavConfig {
            num_uavs: 1,
            num_devices: 1,
            ..UavConfig::default()
        };
        let mut env = UavEnv::new(cfg.clone()).unwrap();
        env.reset(0);
        let cell = env.state().uav_cells[0];
        env.state.device_positions[0] = env.cell_center(cell);
        let s = env.step(&[hover(0, 1)]).unwrap();
        // -100 dBm noise, 24 dB threshold, 30 + 23 log10(100) = 76 dB path loss.
        let hand = 10f64.powf((-100.0 - 30.0) / 10.0) * 10f64.powf(2.4) * 10f64.powf(7.6);
        assert!((hand - 1.0e-3).abs() < 1e-6);
        let out = &env.last_detail().unwrap().per_uav[0];
        assert!(out.success);
        assert!((out.power_w / hand - 1.0).abs() < 1e-12);
        assert_eq!(s.info[2], out.power_w);
        assert_eq!(env.state().aoi, vec![1]);

        let tight = UavConfig {
            max_device_power_dbm: 10.0 * (hand * 0.99).log10() + 30.0,
            ..cfg
        };
        let mut env = UavEnv::new(tight).unwrap();
        env.reset(0);
        let cell = env.state().uav_cells[0];
        env.state.device_positions[0] = env.cell_center(cell);
        env.step(&[hover(0, 1)]).unwrap();
        assert!(!env.last_detail().unwrap().per_uav[0].success);
        assert_eq!(env.state().aoi, vec![2]);
    }

    #[test]
    fn nearer_uav_wins_collision() {
        let cfg = UavConfig {
            num_uavs: 2,
            num_devices: 2,
            ..UavConfig::default()
        };
        let mut env = UavEnv::new(cfg).unwrap();
        env.reset(0);
        env.state.uav_cells = vec![(0, 0), (5, 5)];
        env.state.device_positions = vec![env.cell_center((5, 6)), env.cell_center((0, 0))];
        env.state.aoi = vec![3, 3];
        env.step(&[hover(0, 2), hover(0, 2)]).unwrap();
        let detail = env.last_detail().unwrap();
        assert!(!detail.per_uav[0].success);
        assert!(detail.per_uav[1].success);
        assert_eq!(env.state().aoi, vec![1, 4]);
    }

    #[test]
    fn required_power_algebra() {
        let cfg = UavConfig::default();
        let mut prev = 0.0;
        for i in 0..50 {
            let p = required_power_watts(100.0 + 20.0 * i as f64, &cfg);
            assert!(p > prev);
            prev = p;
        }
        let ratio = required_power_watts(400.0, &cfg) / required_power_watts(200.0, &cfg);
        assert!((ratio - 2f64.powf(2.3)).abs() < 1e-9);
        let silent = UavConfig {
            snr_threshold_db: -400.0,
            ..cfg
        };
        assert!(required_power_watts(300.0, &silent) < 1e-40);
    }

    #[test]
    fn tasks() {
        assert!(make_task(-0.1).is_err());
        let fam = default_task_family();
        assert_eq!(fam.len(), 5);
        for w in fam.windows(2) {
            assert!((w[1].power_factor / w[0].power_factor - 10f64.sqrt()).abs() < 1e-12);
        }
        assert!(fam.iter().all(|t| t.power_factor != DEFAULT_TEST_POWER_FACTOR));
        // zero power factor leaves only the AoI term
        assert_eq!(uav_reward(4.0, 100.0, 0.3, 0.0), -0.04);
    }

    #[test]
    fn fingerprint_ignores_power_factor() {
        let a = UavConfig::default();
        let b = UavConfig {
            power_factor: 7.0,
            ..a.clone()
        };
        let c = UavConfig {
            num_devices: 14,
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
