//! Multi-AP user scheduling with proportional fairness.
//!
//! Every AP serves exactly one of its top-k PF-ranked UEs per step. All APs
//! transmit at once, so each served link sees interference from every other
//! AP. Channel: log-distance path loss plus unit-mean exponential fading
//! redrawn every step. UEs wander with a random heading at constant speed
//! and reflect off the borders of the square.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_joint_action, dbm_to_watts, Fingerprint, MultiAgentEnv, Step};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApPlacement {
    /// Centres of a near-square grid of equal cells.
    Grid,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrmConfig {
    pub area_side_m: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub episode_len: usize,
    pub ue_speed_mps: f64,
    pub step_duration_s: f64,
    pub top_k: usize,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub bandwidth_hz: f64,
    pub pathloss_exponent: f64,
    pub pf_ema_decay: f64,
    /// Floor (bit/s) of the averaged throughput; also its initial value.
    pub pf_floor_bps: f64,
    pub rscore_fairness_weight: f64,
    pub reward_rate_weight: f64,
    pub reward_pf_weight: f64,
    pub ap_placement: ApPlacement,
}

impl Default for RrmConfig {
    fn default() -> Self {
        Self {
            area_side_m: 5000.0,
            num_aps: 4,
            num_ues: 24,
            episode_len: 2000,
            ue_speed_mps: 1.0,
            step_duration_s: 1.0,
            top_k: 3,
            tx_power_dbm: 40.0,
            noise_dbm: -97.0,
            bandwidth_hz: 10e6,
            pathloss_exponent: 3.0,
            pf_ema_decay: 0.99,
            pf_floor_bps: 1e6,
            rscore_fairness_weight: 2.0,
            reward_rate_weight: 1.0,
            reward_pf_weight: 1.0,
            ap_placement: ApPlacement::Grid,
        }
    }
}

impl RrmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("area_side_m", self.area_side_m),
            ("step_duration_s", self.step_duration_s),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pathloss_exponent", self.pathloss_exponent),
            ("pf_floor_bps", self.pf_floor_bps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("rrm.{name} must be positive, got {v}")));
            }
        }
        if !(self.ue_speed_mps.is_finite() && self.ue_speed_mps >= 0.0) {
            return Err(Error::config("rrm.ue_speed_mps must be non-negative"));
        }
        if self.num_aps == 0 || self.top_k == 0 || self.episode_len == 0 {
            return Err(Error::config("rrm: num_aps, top_k and episode_len must be positive"));
        }
        if self.num_ues < self.num_aps * self.top_k {
            return Err(Error::config(format!(
                "rrm: {} UEs cannot fill top-{} lists for {} APs",
                self.num_ues, self.top_k, self.num_aps
            )));
        }
        if !(self.pf_ema_decay > 0.0 && self.pf_ema_decay < 1.0) {
            return Err(Error::config("rrm.pf_ema_decay must lie in (0, 1)"));
        }
        if self.rscore_fairness_weight < 0.0 {
            return Err(Error::config("rrm.rscore_fairness_weight must be non-negative"));
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_dbm.is_finite() {
            return Err(Error::config("rrm: tx_power_dbm and noise_dbm must be finite"));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v["env"] = "rrm".into();
        Fingerprint::of_json(&v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RrmState {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub ue_headings: Vec<f64>,
    /// Serving AP of each UE.
    pub associations: Vec<usize>,
    /// Exponentially averaged throughput per UE (bit/s), floored.
    pub avg_throughput: Vec<f64>,
    /// Small-scale power gain, indexed `[ap][ue]`.
    pub fading: Vec<Vec<f64>>,
    pub t: usize,
    /// Per-UE sum of instantaneous rates over the episode so far.
    pub rate_sums: Vec<f64>,
}

/// What happened in the most recent step.
#[derive(Clone, Debug, PartialEq)]
pub struct RrmStepDetail {
    pub t: usize,
    pub served: Vec<usize>,
    pub rates: Vec<f64>,
    pub served_pf: Vec<f64>,
    pub reward: f64,
}

pub fn pathloss_db(distance_m: f64, config: &RrmConfig) -> f64 {
    let d = distance_m.max(1.0);
    38.0 + 10.0 * config.pathloss_exponent * d.log10()
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn received_power_w(ap: usize, ue: usize, state: &RrmState, config: &RrmConfig) -> f64 {
    let d = distance(state.ap_positions[ap], state.ue_positions[ue]);
    dbm_to_watts(config.tx_power_dbm) * state.fading[ap][ue] * 10f64.powf(-pathloss_db(d, config) / 10.0)
}

/// Linear SINR of the `ap -> ue` link when the APs in `schedule` transmit.
pub fn sinr_linear(
    ap: usize,
    ue: usize,
    schedule: &[usize],
    state: &RrmState,
    config: &RrmConfig,
) -> f64 {
    let signal = received_power_w(ap, ue, state, config);
    let interference: f64 = schedule
        .iter()
        .filter(|&&j| j != ap)
        .map(|&j| received_power_w(j, ue, state, config))
        .sum();
    signal / (interference + dbm_to_watts(config.noise_dbm))
}

pub fn shannon_rate(sinr: f64, config: &RrmConfig) -> f64 {
    config.bandwidth_hz * (1.0 + sinr).log2()
}

/// Interference-free achievable rate over averaged throughput.
pub fn pf_factor(ue: usize, state: &RrmState, config: &RrmConfig) -> f64 {
    let ap = state.associations[ue];
    let snr = sinr_linear(ap, ue, &[ap], state, config);
    shannon_rate(snr, config) / state.avg_throughput[ue].max(config.pf_floor_bps)
}

/// UEs associated with `ap`, by descending PF factor (ties by UE index).
pub fn ranked_ues(ap: usize, state: &RrmState, config: &RrmConfig) -> Vec<usize> {
    let mut ues: Vec<(usize, f64)> = (0..state.associations.len())
        .filter(|&u| state.associations[u] == ap)
        .map(|u| (u, pf_factor(u, state, config)))
        .collect();
    ues.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ues.into_iter().map(|(u, _)| u).collect()
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Mean per-UE rate plus `fairness_weight` times the 5th-percentile rate.
pub fn rscore(mean_rates: &[f64], fairness_weight: f64) -> Result<f64> {
    if mean_rates.is_empty() {
        return Err(Error::contract("rscore of an empty rate vector"));
    }
    let mean = mean_rates.iter().sum::<f64>() / mean_rates.len() as f64;
    Ok(mean + fairness_weight * percentile(mean_rates, 0.05))
}

fn normalize_sinr_db(db: f64) -> f64 {
    (db.clamp(-20.0, 60.0) + 20.0) / 80.0 * 2.0 - 1.0
}

pub struct RrmEnv {
    config: RrmConfig,
    state: RrmState,
    rng: StreamRng,
    rankings: Vec<Vec<usize>>,
    last: Option<RrmStepDetail>,
}

impl RrmEnv {
    pub fn new(config: RrmConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            state: RrmState {
                ap_positions: vec![],
                ue_positions: vec![],
                ue_headings: vec![],
                associations: vec![],
                avg_throughput: vec![],
                fading: vec![],
                t: 0,
                rate_sums: vec![],
            },
            config,
            rng: seeded_rng(0, "rrm-env"),
            rankings: vec![],
            last: None,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &RrmConfig {
        &self.config
    }

    pub fn state(&self) -> &RrmState {
        &self.state
    }

    pub fn last_detail(&self) -> Option<&RrmStepDetail> {
        self.last.as_ref()
    }

    /// Top-k ranked UEs per AP, as seen in the latest observation.
    pub fn rankings(&self) -> &[Vec<usize>] {
        &self.rankings
    }

    pub fn episode_mean_rates(&self) -> Vec<f64> {
        let steps = self.state.t.max(1) as f64;
        self.state.rate_sums.iter().map(|s| s / steps).collect()
    }

    pub fn episode_rscore(&self) -> f64 {
        rscore(&self.episode_mean_rates(), self.config.rscore_fairness_weight)
            .expect("num_ues is positive")
    }

    fn ap_grid(&self) -> Vec<[f64; 2]> {
        let n = self.config.num_aps;
        let side = self.config.area_side_m;
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let (w, h) = (side / cols as f64, side / rows as f64);
        (0..n)
            .map(|i| [((i % cols) as f64 + 0.5) * w, ((i / cols) as f64 + 0.5) * h])
            .collect()
    }

    fn associate(&self, aps: &[[f64; 2]], ues: &[[f64; 2]]) -> Vec<usize> {
        let nearest = |ue: [f64; 2]| {
            let mut best = 0;
            for j in 1..aps.len() {
                if distance(aps[j], ue) < distance(aps[best], ue) {
                    best = j;
                }
            }
            best
        };
        let mut assoc: Vec<usize> = ues.iter().map(|&u| nearest(u)).collect();
        // Top-up APs that would otherwise observe fewer than top_k UEs by
        // taking the closest UE from an AP that can spare one.
        let k = self.config.top_k;
        loop {
            let mut counts = vec![0usize; aps.len()];
            for &a in &assoc {
                counts[a] += 1;
            }
            let Some(short) = (0..aps.len()).find(|&a| counts[a] < k) else {
                break;
            };
            let donor = (0..ues.len())
                .filter(|&u| counts[assoc[u]] > k)
                .min_by(|&a, &b| {
                    distance(aps[short], ues[a])
                        .total_cmp(&distance(aps[short], ues[b]))
                        .then(a.cmp(&b))
                })
                .expect("validate() guarantees num_ues >= num_aps * top_k");
            assoc[donor] = short;
        }
        assoc
    }

    fn draw_fading(&mut self) {
        for row in &mut self.state.fading {
            for g in row.iter_mut() {
                *g = -(1.0 - self.rng.random::<f64>()).ln();
            }
        }
    }

    fn observe(&mut self) -> Vec<Vec<f64>> {
        let cfg = &self.config;
        let st = &self.state;
        let schedule: Vec<usize> = (0..cfg.num_aps).collect();
        self.rankings = (0..cfg.num_aps)
            .map(|ap| {
                let mut r = ranked_ues(ap, st, cfg);
                r.truncate(cfg.top_k);
                r
            })
            .collect();
        self.rankings
            .iter()
            .enumerate()
            .map(|(ap, ranked)| {
                let mut obs = Vec::with_capacity(2 * cfg.top_k);
                for &ue in ranked {
                    let s = sinr_linear(ap, ue, &schedule, st, cfg);
                    obs.push(normalize_sinr_db(10.0 * s.log10()));
                }
                for &ue in ranked {
                    let pf = pf_factor(ue, st, cfg);
                    obs.push(pf / (1.0 + pf));
                }
                obs
            })
            .collect()
    }

    fn move_ues(&mut self) {
        let side = self.config.area_side_m;
        let stride = self.config.ue_speed_mps * self.config.step_duration_s;
        for (pos, heading) in self
            .state
            .ue_positions
            .iter_mut()
            .zip(self.state.ue_headings.iter_mut())
        {
            *heading = self.rng.random_range(0.0..2.0 * PI);
            let delta = [stride * heading.cos(), stride * heading.sin()];
            for axis in 0..2 {
                let mut x = pos[axis] + delta[axis];
                if x < 0.0 {
                    x = -x;
                }
                if x > side {
                    x = 2.0 * side - x;
                }
                pos[axis] = x.clamp(0.0, side);
            }
        }
    }
}

impl MultiAgentEnv for RrmEnv {
    fn num_agents(&self) -> usize {
        self.config.num_aps
    }

    fn obs_dim(&self) -> usize {
        2 * self.config.top_k
    }

    fn num_actions(&self) -> usize {
        self.config.top_k
    }

    fn episode_len(&self) -> usize {
        self.config.episode_len
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = seeded_rng(seed, "rrm-env");
        let side = self.config.area_side_m;
        let aps = match self.config.ap_placement {
            ApPlacement::Grid => self.ap_grid(),
            ApPlacement::Uniform => (0..self.config.num_aps)
                .map(|_| [self.rng.random_range(0.0..side), self.rng.random_range(0.0..side)])
                .collect(),
        };
        let ues: Vec<[f64; 2]> = (0..self.config.num_ues)
            .map(|_| [self.rng.random_range(0.0..side), self.rng.random_range(0.0..side)])
            .collect();
        let headings = (0..self.config.num_ues)
            .map(|_| self.rng.random_range(0.0..2.0 * PI))
            .collect();
        let associations = self.associate(&aps, &ues);
        self.state = RrmState {
            ap_positions: aps,
            ue_positions: ues,
            ue_headings: headings,
            associations,
            avg_throughput: vec![self.config.pf_floor_bps; self.config.num_ues],
            fading: vec![vec![1.0; self.config.num_ues]; self.config.num_aps],
            t: 0,
            rate_sums: vec![0.0; self.config.num_ues],
        };
        self.draw_fading();
        self.last = None;
        self.observe()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<Step> {
        if self.state.t >= self.config.episode_len {
            return Err(Error::contract("rrm: step called after the episode ended"));
        }
        check_joint_action(joint_action, self.config.num_aps, self.config.top_k)?;
        let cfg = &self.config;
        let schedule: Vec<usize> = (0..cfg.num_aps).collect();
        let served: Vec<usize> = joint_action
            .iter()
            .enumerate()
            .map(|(ap, &slot)| self.rankings[ap][slot])
            .collect();
        let served_pf: Vec<f64> = served
            .iter()
            .map(|&ue| pf_factor(ue, &self.state, cfg))
            .collect();
        let mut rates = vec![0.0; cfg.num_ues];
        for (ap, &ue) in served.iter().enumerate() {
            rates[ue] = shannon_rate(sinr_linear(ap, ue, &schedule, &self.state, cfg), cfg);
        }
        let beta = cfg.pf_ema_decay;
        for (u, avg) in self.state.avg_throughput.iter_mut().enumerate() {
            *avg = (beta * *avg + (1.0 - beta) * rates[u]).max(cfg.pf_floor_bps);
        }
        for (sum, r) in self.state.rate_sums.iter_mut().zip(&rates) {
            *sum += r;
        }
        let reward = team_reward(&rates, &served_pf, cfg);

        self.move_ues();
        self.draw_fading();
        self.state.t += 1;
        let done = self.state.t == self.config.episode_len;
        let observations = self.observe();

        let mut info = rates.clone();
        info.extend_from_slice(&served_pf);
        self.last = Some(RrmStepDetail {
            t: self.state.t - 1,
            served,
            rates,
            served_pf,
            reward,
        });
        Ok(Step {
            observations,
            reward,
            done,
            info,
        })
    }
}

/// Weighted sum of bandwidth-normalised rates and served PF factors.
pub fn team_reward(rates: &[f64], served_pf: &[f64], config: &RrmConfig) -> f64 {
    let rate_term = rates.iter().sum::<f64>() / config.bandwidth_hz;
    let pf_term: f64 = served_pf.iter().sum();
    config.reward_rate_weight * rate_term + config.reward_pf_weight * pf_term
}
