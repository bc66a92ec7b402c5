use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{offset_scan_channel, EpochSchedule};
use super::{ProtocolParams, TiebreakMode};
use crate::assignment::{canonical_choice, filter_by_pin, optimal_set_from_quantized, Matching};
use crate::codec::{encode_value, QuantizedMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Fixing,
    Verify,
    Explore,
    MatchComm,
    TieBreak,
    Exploit,
    DegradedRandom,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Fixing => "fixing",
            Phase::Verify => "verify",
            Phase::Explore => "explore",
            Phase::MatchComm => "match_comm",
            Phase::TieBreak => "tiebreak",
            Phase::Exploit => "exploit",
            Phase::DegradedRandom => "degraded",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regret bucket a step is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exploration,
    Matching,
    Exploitation,
}

/// Observations that contradict the protocol's assumptions. They only occur
/// when a non-collided pull can yield a zero reward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// A scan over a transmitting slot met no collision.
    NoCollisionDetected { slot: usize },
    /// A scan saw more than one zero reward.
    MultipleCollisions { slot: usize },
    /// The presence probes found a different number of users than `k`.
    PresenceMismatch { expected: usize, found: usize },
    /// A tie-break pin matched no remaining candidate.
    EmptyAfterFilter { slot: usize, channel: usize },
    /// The estimates could not be turned into a matching.
    Solver { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AgentEvent {
    Fixed {
        epoch: u32,
        channel: usize,
    },
    Verdict {
        epoch: u32,
        all_fixed: bool,
    },
    MatrixReceived {
        epoch: u32,
        /// IDs found present, ascending; row `r` of the matrix is `present[r]`.
        present: Vec<usize>,
        matrix: QuantizedMatrix,
    },
    Settled {
        epoch: u32,
        matching: Matching,
        row: usize,
    },
    Fault {
        epoch: u32,
        fault: FaultKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Window {
    Probe,
    Digit { value: usize, round: u32 },
}

#[derive(Debug, Clone)]
struct Comm {
    slot: usize,
    window: Window,
    present: Vec<usize>,
    rows: Vec<Vec<u32>>,
}

/// One user's protocol state. Agents see only their own actions and
/// rewards: the harness calls [`Agent::act`], steps the environment, then
/// feeds the reward back through [`Agent::observe`].
#[derive(Debug, Clone)]
pub struct Agent {
    params: ProtocolParams,
    rng: ChaCha8Rng,
    epoch: u32,
    phase: Phase,
    counter: u64,
    last_action: usize,
    id: Option<usize>,
    all_fixed_since: Option<u32>,
    channel_one_clear: bool,
    sums: Vec<f64>,
    counts: Vec<u64>,
    own_digits: Vec<u32>,
    comm: Comm,
    /// Channels that returned zero in the current scan window.
    zero_hits: Vec<usize>,
    quantized: Option<QuantizedMatrix>,
    row: Option<usize>,
    candidates: Vec<Matching>,
    leader_row: usize,
    final_matching: Option<Matching>,
    exploit_channel: usize,
    events: Vec<AgentEvent>,
}

impl Agent {
    /// A fresh agent at the start of epoch 1.
    pub fn new(params: ProtocolParams, seed: u64) -> Self {
        let m = params.m;
        let mut agent = Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            epoch: 1,
            phase: Phase::Fixing,
            counter: 0,
            last_action: 1,
            id: None,
            all_fixed_since: None,
            channel_one_clear: false,
            sums: vec![0.0; m],
            counts: vec![0; m],
            own_digits: Vec::new(),
            comm: Comm {
                slot: 1,
                window: Window::Probe,
                present: Vec::new(),
                rows: Vec::new(),
            },
            zero_hits: Vec::new(),
            quantized: None,
            row: None,
            candidates: Vec::new(),
            leader_row: 0,
            final_matching: None,
            exploit_channel: 1,
            events: Vec::new(),
        };
        agent.begin_epoch();
        agent
    }

    /// An agent about to run verification in `epoch` with the given
    /// tentative ID (or none if it never fixed).
    pub fn entering_verify(
        params: ProtocolParams,
        seed: u64,
        epoch: u32,
        tentative_id: Option<usize>,
    ) -> Self {
        let mut agent = Self::new(params, seed);
        agent.epoch = epoch;
        agent.id = tentative_id;
        agent.enter(Phase::Verify);
        agent
    }

    /// An agent whose ID was confirmed in `epoch`, about to explore.
    pub fn entering_explore(params: ProtocolParams, seed: u64, epoch: u32, id: usize) -> Self {
        let mut agent = Self::new(params, seed);
        agent.epoch = epoch;
        agent.id = Some(id);
        agent.all_fixed_since = Some(epoch);
        agent.enter(Phase::Explore);
        agent
    }

    /// An agent that holds `estimates` and is about to transmit them.
    pub fn entering_match(
        params: ProtocolParams,
        seed: u64,
        epoch: u32,
        id: usize,
        estimates: &[f64],
    ) -> Self {
        let mut agent = Self::entering_explore(params, seed, epoch, id);
        agent.start_match_comm(estimates);
        agent
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Steps already taken in the current phase.
    pub fn phase_step(&self) -> u64 {
        self.counter
    }

    /// Current (possibly tentative) ID.
    pub fn id(&self) -> Option<usize> {
        self.id
    }

    pub fn all_fixed_since(&self) -> Option<u32> {
        self.all_fixed_since
    }

    pub fn sample_counts(&self) -> &[u64] {
        &self.counts
    }

    /// Empirical mean of each channel, clamped to `[0, 1]`.
    pub fn estimates(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &n)| {
                if n == 0 {
                    0.0
                } else {
                    (s / n as f64).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// Matrix received in the latest communication phase.
    pub fn quantized(&self) -> Option<&QuantizedMatrix> {
        self.quantized.as_ref()
    }

    /// IDs found present in the latest communication phase.
    pub fn present(&self) -> &[usize] {
        &self.comm.present
    }

    pub fn candidates(&self) -> &[Matching] {
        &self.candidates
    }

    pub fn final_matching(&self) -> Option<&Matching> {
        self.final_matching.as_ref()
    }

    /// Row of this agent in the shared matrix, once known.
    pub fn row(&self) -> Option<usize> {
        self.row
    }

    /// Whether this agent holds a fixed channel as transmitter or leader in
    /// the current step (everyone else scans).
    pub fn is_parked(&self) -> bool {
        match self.phase {
            Phase::MatchComm => self.id == Some(self.comm.slot),
            Phase::TieBreak => self.row == Some(self.leader_row),
            _ => false,
        }
    }

    pub fn stage(&self) -> Stage {
        match self.phase {
            Phase::Fixing | Phase::Verify | Phase::Explore => Stage::Exploration,
            Phase::MatchComm | Phase::TieBreak => Stage::Matching,
            Phase::Exploit => Stage::Exploitation,
            Phase::DegradedRandom => {
                if self.counter < self.explore_len() {
                    Stage::Exploration
                } else {
                    Stage::Exploitation
                }
            }
        }
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, AgentEvent> {
        self.events.drain(..)
    }

    pub fn has_events(&self) -> bool {
        !self.events.is_empty()
    }

    fn explore_len(&self) -> u64 {
        self.params.gamma * self.params.m as u64
    }

    fn random_channel(&mut self) -> usize {
        self.rng.random_range(1..=self.params.m)
    }

    fn scan(&self, s: u64) -> usize {
        offset_scan_channel(self.id.expect("scanning requires an ID"), s, self.params.m)
    }

    fn enter(&mut self, phase: Phase) {
        self.phase = phase;
        self.counter = 0;
        self.zero_hits.clear();
    }

    fn fault(&mut self, fault: FaultKind) {
        self.events.push(AgentEvent::Fault {
            epoch: self.epoch,
            fault,
        });
    }

    fn begin_epoch(&mut self) {
        self.quantized = None;
        self.final_matching = None;
        self.candidates.clear();
        self.row = None;
        if self.all_fixed_since.is_some() {
            self.enter(Phase::Explore);
        } else {
            self.id = None;
            self.channel_one_clear = false;
            self.enter(Phase::Fixing);
        }
    }

    fn next_epoch(&mut self) {
        self.epoch += 1;
        self.begin_epoch();
    }

    /// Channel to pull in the current step.
    pub fn act(&mut self) -> usize {
        let m = self.params.m;
        let s = self.counter % m as u64;
        let action = match self.phase {
            Phase::Fixing => match self.id {
                Some(id) => id,
                None => self.random_channel(),
            },
            Phase::Verify => match self.id {
                Some(id) => offset_scan_channel(id, self.counter, m),
                None => 1,
            },
            Phase::Explore => self.scan(self.counter / self.params.gamma),
            Phase::MatchComm => {
                if self.is_parked() {
                    match self.comm.window {
                        Window::Probe => self.comm.slot,
                        Window::Digit { value, round } => {
                            self.own_digits[value * self.params.rounds as usize + round as usize]
                                as usize
                        }
                    }
                } else {
                    self.scan(s)
                }
            }
            Phase::TieBreak => {
                if self.is_parked() {
                    self.leader_pick()
                } else {
                    self.scan(s)
                }
            }
            Phase::Exploit => self.exploit_channel,
            Phase::DegradedRandom => self.random_channel(),
        };
        self.last_action = action;
        action
    }

    /// Feeds back the reward of the action returned by the last `act`.
    pub fn observe(&mut self, reward: f64) {
        let a = self.last_action;
        match self.phase {
            Phase::Fixing => {
                if self.id.is_none() && reward > 0.0 {
                    self.id = Some(a);
                    self.events.push(AgentEvent::Fixed {
                        epoch: self.epoch,
                        channel: a,
                    });
                }
                self.counter += 1;
                if self.counter == self.params.t_fix {
                    self.channel_one_clear = false;
                    self.enter(Phase::Verify);
                }
            }
            Phase::Verify => {
                if a == 1 && self.id.is_some() {
                    self.channel_one_clear = reward > 0.0;
                }
                self.counter += 1;
                if self.counter == self.params.m as u64 {
                    self.finish_verify();
                }
            }
            Phase::Explore => {
                self.sums[a - 1] += reward;
                self.counts[a - 1] += 1;
                self.counter += 1;
                if self.counter == self.explore_len() {
                    let estimates = self.estimates();
                    self.start_match_comm(&estimates);
                }
            }
            Phase::MatchComm => {
                if !self.is_parked() && reward == 0.0 {
                    self.zero_hits.push(a);
                }
                self.counter += 1;
                if self.counter.is_multiple_of(self.params.m as u64) {
                    self.finish_comm_window();
                }
            }
            Phase::TieBreak => {
                if !self.is_parked() && reward == 0.0 {
                    self.zero_hits.push(a);
                }
                self.counter += 1;
                if self.counter.is_multiple_of(self.params.m as u64) {
                    self.finish_tiebreak_window();
                }
            }
            Phase::Exploit => {
                self.counter += 1;
                if self.counter == EpochSchedule::exploit_len(self.epoch) {
                    self.next_epoch();
                }
            }
            Phase::DegradedRandom => {
                self.counter += 1;
                let len = self
                    .explore_len()
                    .saturating_add(EpochSchedule::exploit_len(self.epoch));
                if self.counter == len {
                    self.next_epoch();
                }
            }
        }
    }

    fn finish_verify(&mut self) {
        let all_fixed = self.id.is_some() && self.channel_one_clear;
        self.events.push(AgentEvent::Verdict {
            epoch: self.epoch,
            all_fixed,
        });
        if all_fixed {
            self.all_fixed_since = Some(self.epoch);
            self.enter(Phase::Explore);
        } else {
            self.id = None;
            self.enter(Phase::DegradedRandom);
        }
    }

    fn start_match_comm(&mut self, estimates: &[f64]) {
        let m = self.params.m as u32;
        let rounds = self.params.rounds;
        self.own_digits.clear();
        for &x in estimates {
            let digits = encode_value(x.clamp(0.0, 1.0), m, rounds)
                .expect("params validated radix and rounds");
            self.own_digits.extend(digits);
        }
        self.comm.slot = 1;
        self.comm.window = Window::Probe;
        self.comm.present.clear();
        self.comm.rows.clear();
        self.enter(Phase::MatchComm);
    }

    fn finish_comm_window(&mut self) {
        let slot = self.comm.slot;
        let owner = self.id == Some(slot);
        match self.comm.window {
            Window::Probe => {
                let present = owner || self.zero_hits.contains(&slot);
                if !owner && (self.zero_hits.len() > 1 || (!present && !self.zero_hits.is_empty()))
                {
                    self.fault(FaultKind::MultipleCollisions { slot });
                }
                self.zero_hits.clear();
                if present {
                    self.comm.present.push(slot);
                    self.comm.rows.push(Vec::with_capacity(
                        self.params.m * self.params.rounds as usize,
                    ));
                    self.comm.window = Window::Digit { value: 0, round: 0 };
                } else {
                    self.advance_slot();
                }
            }
            Window::Digit { value, round } => {
                let digit = if owner {
                    self.own_digits[value * self.params.rounds as usize + round as usize] as usize
                } else {
                    match self.zero_hits.as_slice() {
                        [h] => *h,
                        [] => {
                            self.fault(FaultKind::NoCollisionDetected { slot });
                            1
                        }
                        [h, ..] => {
                            let h = *h;
                            self.fault(FaultKind::MultipleCollisions { slot });
                            h
                        }
                    }
                };
                self.zero_hits.clear();
                self.comm
                    .rows
                    .last_mut()
                    .expect("digit windows follow a present probe")
                    .push(digit as u32);
                let next_round = round + 1;
                if next_round < self.params.rounds {
                    self.comm.window = Window::Digit {
                        value,
                        round: next_round,
                    };
                } else if value + 1 < self.params.m {
                    self.comm.window = Window::Digit {
                        value: value + 1,
                        round: 0,
                    };
                } else {
                    self.advance_slot();
                }
            }
        }
    }

    fn advance_slot(&mut self) {
        self.comm.slot += 1;
        self.comm.window = Window::Probe;
        if self.comm.slot > self.params.m {
            self.finish_match_comm();
        }
    }

    fn finish_match_comm(&mut self) {
        let k = self.params.k;
        let m = self.params.m;
        let own = self.id.expect("communication requires an ID");
        if self.comm.present.len() != k {
            self.fault(FaultKind::PresenceMismatch {
                expected: k,
                found: self.comm.present.len(),
            });
            self.fallback_exploit(own);
            return;
        }
        let digits = self.comm.rows.concat();
        let matrix = match QuantizedMatrix::from_digits(k, m, self.params.rounds, digits) {
            Ok(q) => q,
            Err(e) => {
                self.fault(FaultKind::Solver {
                    message: e.to_string(),
                });
                self.fallback_exploit(own);
                return;
            }
        };
        self.row = self.comm.present.iter().position(|&p| p == own);
        self.events.push(AgentEvent::MatrixReceived {
            epoch: self.epoch,
            present: self.comm.present.clone(),
            matrix: matrix.clone(),
        });
        let set = optimal_set_from_quantized(&matrix);
        self.quantized = Some(matrix);
        match set {
            Ok(set) => self.candidates = set,
            Err(e) => {
                self.fault(FaultKind::Solver {
                    message: e.to_string(),
                });
                self.fallback_exploit(own);
                return;
            }
        }
        if self.candidates.len() == 1 || self.params.tiebreak_mode == TiebreakMode::Deterministic {
            self.settle();
        } else {
            self.leader_row = 0;
            self.enter(Phase::TieBreak);
        }
    }

    /// Exploit the own ID channel when the shared matrix is unusable.
    fn fallback_exploit(&mut self, own: usize) {
        self.final_matching = None;
        self.exploit_channel = own;
        self.enter(Phase::Exploit);
    }

    fn settle(&mut self) {
        let matching = canonical_choice(&self.candidates).expect("candidate set is nonempty");
        let row = self.row.expect("own row is known after communication");
        self.exploit_channel = matching.channel_of(row + 1);
        self.candidates = vec![matching.clone()];
        self.events.push(AgentEvent::Settled {
            epoch: self.epoch,
            matching: matching.clone(),
            row,
        });
        self.final_matching = Some(matching);
        self.enter(Phase::Exploit);
    }

    fn leader_pick(&self) -> usize {
        canonical_choice(&self.candidates)
            .expect("candidate set is nonempty")
            .channel_of(self.leader_row + 1)
    }

    fn finish_tiebreak_window(&mut self) {
        let slot = self.leader_row + 1;
        let pinned = if self.is_parked() {
            Some(self.leader_pick())
        } else {
            match self.zero_hits.as_slice() {
                [h] => Some(*h),
                [] => {
                    self.fault(FaultKind::NoCollisionDetected { slot });
                    None
                }
                [h, ..] => {
                    let h = *h;
                    self.fault(FaultKind::MultipleCollisions { slot });
                    Some(h)
                }
            }
        };
        self.zero_hits.clear();
        if let Some(channel) = pinned {
            match filter_by_pin(&self.candidates, slot, channel) {
                Ok(kept) => self.candidates = kept,
                Err(_) => self.fault(FaultKind::EmptyAfterFilter { slot, channel }),
            }
        }
        self.leader_row += 1;
        if self.candidates.len() == 1 || self.leader_row == self.params.k {
            self.settle();
        }
    }
}
