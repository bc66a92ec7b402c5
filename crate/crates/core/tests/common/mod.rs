#![allow(dead_code)]

use mumab_core::protocol::{AgentEvent, EpochSchedule};
use mumab_core::{
    optimal_set_from_quantized, Agent, ParamOverrides, Phase, ProtocolParams, QuantizedMatrix,
    TiebreakMode,
};
use num::{BigInt, BigRational, Signed, Zero};
use rand::Rng;

/// Every injective assignment of `k` rows to `m` channels (1-based), in
/// lexicographic order.
pub fn all_matchings(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in 1..=m {
            if !cur.contains(&c) {
                cur.push(c);
                go(k, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(k, m, &mut Vec::new(), &mut out);
    out
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn exact_rows(rows: &[Vec<f64>]) -> Vec<Vec<BigRational>> {
    rows.iter()
        .map(|r| r.iter().map(|&x| exact(x)).collect())
        .collect()
}

pub fn reward(rows: &[Vec<BigRational>], a: &[usize]) -> BigRational {
    a.iter()
        .enumerate()
        .fold(BigRational::zero(), |acc, (j, &c)| acc + &rows[j][c - 1])
}

pub struct BruteForce {
    pub j1: BigRational,
    pub j2: Option<BigRational>,
    /// Lexicographic.
    pub optimal: Vec<Vec<usize>>,
}

/// Exhaustive search in exact rational arithmetic.
pub fn brute_force(rows: &[Vec<BigRational>]) -> BruteForce {
    let k = rows.len();
    let m = rows[0].len();
    let scored: Vec<(BigRational, Vec<usize>)> = all_matchings(k, m)
        .into_iter()
        .map(|a| (reward(rows, &a), a))
        .collect();
    let j1 = scored.iter().map(|s| s.0.clone()).max().unwrap();
    let optimal = scored
        .iter()
        .filter(|s| s.0 == j1)
        .map(|s| s.1.clone())
        .collect();
    let j2 = scored.iter().map(|s| s.0.clone()).filter(|v| *v < j1).max();
    BruteForce { j1, j2, optimal }
}

/// Same search on integer weights.
pub fn brute_force_int(rows: &[Vec<u128>]) -> Vec<Vec<usize>> {
    let k = rows.len();
    let m = rows[0].len();
    let scored: Vec<(u128, Vec<usize>)> = all_matchings(k, m)
        .into_iter()
        .map(|a| (a.iter().enumerate().map(|(j, &c)| rows[j][c - 1]).sum(), a))
        .collect();
    let best = scored.iter().map(|s| s.0).max().unwrap();
    scored
        .into_iter()
        .filter(|s| s.0 == best)
        .map(|s| s.1)
        .collect()
}

/// `x = mant / 2^shift` with `mant` odd (or zero).
fn dyadic(x: f64) -> (u64, u32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1 << 52) - 1);
    let (mant, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | 1 << 52, exp - 1075)
    };
    if mant == 0 {
        return (0, 0);
    }
    let tz = mant.trailing_zeros();
    (mant >> tz, (-(e + tz as i32)) as u32)
}

/// `|x - decoded| <= 1 / (2 radix^R)` in exact arithmetic, rebuilding the
/// decoded value `N / (2 radix^R)` from the digits without the codec.
pub fn within_half_cell(x: f64, digits: &[u32], radix: u32) -> bool {
    let rounds = digits.len() as u32;
    let den = 2 * (radix as i128).pow(rounds);
    let last = digits.len() - 1;
    let numer: i128 = digits
        .iter()
        .enumerate()
        .map(|(n, &h)| {
            let place = (radix as i128).pow(rounds - 1 - n as u32);
            if n == last {
                2 * h as i128 - 1
            } else {
                2 * (h as i128 - 1) * place
            }
        })
        .sum();
    // |mant / 2^s - N / D| <= 1 / D  <=>  |mant D - N 2^s| <= 2^s
    let (mant, s) = dyadic(x);
    if s <= 64 && den < 1 << 40 {
        let lhs = mant as i128 * den - (numer << s);
        lhs.abs() <= 1i128 << s
    } else {
        let bound = BigRational::new(1.into(), BigInt::from(den));
        (exact(x) - BigRational::new(BigInt::from(numer), BigInt::from(den))).abs() <= bound
    }
}

/// Random `k x m` rows. Half of the draws sit on a coarse dyadic grid so
/// that multiple optima and exact ties are common.
pub fn random_rows<R: Rng>(rng: &mut R, k: usize, m: usize) -> Vec<Vec<f64>> {
    let denom = match rng.random_range(0..4) {
        0 => 4.0,
        1 => 8.0,
        2 => 1024.0,
        _ => 0.0,
    };
    (0..k)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if denom == 0.0 {
                        rng.random::<f64>()
                    } else {
                        rng.random_range(0..=denom as u32) as f64 / denom
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleReport {
    pub configurations: u64,
    pub steps: u64,
    pub scanner_collisions: u64,
    pub wrong_verdicts: u64,
    pub explore_collisions: u64,
    pub presence_mismatches: u64,
    pub digit_mismatches: u64,
    pub tiebreak_disagreements: u64,
    pub faults: u64,
}

impl ScheduleReport {
    pub fn clean(&self) -> bool {
        self.scanner_collisions == 0
            && self.wrong_verdicts == 0
            && self.explore_collisions == 0
            && self.presence_mismatches == 0
            && self.digit_mismatches == 0
            && self.tiebreak_disagreements == 0
            && self.faults == 0
    }

    fn add(&mut self, o: &ScheduleReport) {
        self.configurations += o.configurations;
        self.steps += o.steps;
        self.scanner_collisions += o.scanner_collisions;
        self.wrong_verdicts += o.wrong_verdicts;
        self.explore_collisions += o.explore_collisions;
        self.presence_mismatches += o.presence_mismatches;
        self.digit_mismatches += o.digit_mismatches;
        self.tiebreak_disagreements += o.tiebreak_disagreements;
        self.faults += o.faults;
    }
}

pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in start..=m {
            cur.push(c);
            go(c + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(1, m, k, &mut Vec::new(), &mut out);
    out
}

fn params(k: usize, m: usize, rounds: u32, mode: TiebreakMode) -> ProtocolParams {
    ProtocolParams::with_overrides(
        k,
        m,
        0.25,
        mode,
        ParamOverrides {
            t_fix: Some(1),
            gamma: Some(2),
            rounds: Some(rounds),
        },
    )
    .unwrap()
}

/// One lock-step with point-mass rewards of 0.5. Returns the actions and
/// whether two scanning (non-parked) agents met.
fn step(agents: &mut [Agent], m: usize) -> (Vec<usize>, bool) {
    let parked: Vec<bool> = agents.iter().map(|a| a.is_parked()).collect();
    let actions: Vec<usize> = agents.iter_mut().map(|a| a.act()).collect();
    let mut occ = vec![0u32; m + 1];
    let mut scanners = vec![0u32; m + 1];
    for (&a, &p) in actions.iter().zip(&parked) {
        occ[a] += 1;
        if !p {
            scanners[a] += 1;
        }
    }
    for (ag, &a) in agents.iter_mut().zip(&actions) {
        ag.observe(if occ[a] > 1 { 0.0 } else { 0.5 });
    }
    (actions, scanners.iter().any(|&n| n > 1))
}

fn drain_faults(agents: &mut [Agent]) -> u64 {
    agents
        .iter_mut()
        .map(|a| {
            a.drain_events()
                .filter(|e| matches!(e, AgentEvent::Fault { .. }))
                .count() as u64
        })
        .sum()
}

/// Verification over every mix of fixed (distinct IDs) and unfixed agents.
pub fn verify_soundness(k: usize, m: usize) -> ScheduleReport {
    let p = params(k, m, 1, TiebreakMode::Protocol);
    let mut report = ScheduleReport::default();
    let mut configs: Vec<Vec<Option<usize>>> = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for c in &configs {
            next.push({
                let mut v = c.clone();
                v.push(None);
                v
            });
            for id in 1..=m {
                if !c.contains(&Some(id)) {
                    let mut v = c.clone();
                    v.push(Some(id));
                    next.push(v);
                }
            }
        }
        configs = next;
    }
    for ids in configs {
        report.configurations += 1;
        let mut agents: Vec<Agent> = ids
            .iter()
            .enumerate()
            .map(|(j, &id)| Agent::entering_verify(p.clone(), j as u64, 1, id))
            .collect();
        for _ in 0..m {
            let parked: Vec<bool> = ids.iter().map(|i| i.is_none()).collect();
            let actions: Vec<usize> = agents.iter_mut().map(|a| a.act()).collect();
            let mut scanners = vec![0u32; m + 1];
            let mut occ = vec![0u32; m + 1];
            for (&a, &pk) in actions.iter().zip(&parked) {
                occ[a] += 1;
                if !pk {
                    scanners[a] += 1;
                }
            }
            report.scanner_collisions += u64::from(scanners.iter().any(|&n| n > 1));
            for (ag, &a) in agents.iter_mut().zip(&actions) {
                ag.observe(if occ[a] > 1 { 0.0 } else { 0.5 });
            }
            report.steps += 1;
        }
        let expected = ids.iter().all(|i| i.is_some());
        for a in agents.iter_mut() {
            let verdicts: Vec<bool> = a
                .drain_events()
                .filter_map(|e| match e {
                    AgentEvent::Verdict { all_fixed, .. } => Some(all_fixed),
                    _ => None,
                })
                .collect();
            if verdicts != [expected] {
                report.wrong_verdicts += 1;
            }
            let want = if expected {
                Phase::Explore
            } else {
                Phase::DegradedRandom
            };
            if a.phase() != want {
                report.wrong_verdicts += 1;
            }
        }
    }
    report
}

/// Exploration, communication and tie-breaking for every ID subset.
/// `estimates(ids)` gives each agent's row.
pub fn comm_soundness(
    k: usize,
    m: usize,
    rounds: u32,
    mode: TiebreakMode,
    mut estimates: impl FnMut(&[usize]) -> Vec<Vec<f64>>,
) -> (ScheduleReport, Vec<Vec<usize>>) {
    let p = params(k, m, rounds, mode);
    let mut report = ScheduleReport::default();
    let mut settled = Vec::new();
    for ids in subsets(m, k) {
        report.configurations += 1;

        let mut agents: Vec<Agent> = ids
            .iter()
            .map(|&id| Agent::entering_explore(p.clone(), id as u64, 1, id))
            .collect();
        for _ in 0..p.gamma * m as u64 {
            let (actions, _) = step(&mut agents, m);
            let mut seen = vec![false; m + 1];
            for a in actions {
                if std::mem::replace(&mut seen[a], true) {
                    report.explore_collisions += 1;
                }
            }
            report.steps += 1;
        }
        for a in &agents {
            if a.phase() != Phase::MatchComm || a.sample_counts().iter().any(|&n| n != p.gamma) {
                report.explore_collisions += 1;
            }
        }

        let est = estimates(&ids);
        let mut agents: Vec<Agent> = ids
            .iter()
            .zip(&est)
            .map(|(&id, row)| Agent::entering_match(p.clone(), id as u64, 1, id, row))
            .collect();
        for _ in 0..EpochSchedule::match_comm_len(&p, k) {
            let (_, clash) = step(&mut agents, m);
            report.scanner_collisions += u64::from(clash);
            report.steps += 1;
        }
        let flat: Vec<f64> = est.concat();
        let truth = QuantizedMatrix::encode(k, m, rounds, &flat).unwrap();
        for a in &agents {
            if a.present() != ids.as_slice() {
                report.presence_mismatches += 1;
            }
            if a.quantized() != Some(&truth) {
                report.digit_mismatches += 1;
            }
        }

        let mut guard = 0;
        while agents.iter().any(|a| a.phase() == Phase::TieBreak) {
            let (_, clash) = step(&mut agents, m);
            report.scanner_collisions += u64::from(clash);
            report.steps += 1;
            guard += 1;
            assert!(guard <= k * m, "tie-break did not terminate");
        }
        report.faults += drain_faults(&mut agents);

        let optimal = optimal_set_from_quantized(&truth).unwrap();
        let first = agents[0].final_matching().cloned();
        let agree = agents.iter().all(|a| a.final_matching() == first.as_ref())
            && first.as_ref().is_some_and(|f| optimal.contains(f))
            && agents.iter().all(|a| a.phase() == Phase::Exploit);
        if agree {
            let (actions, _) = step(&mut agents, m);
            let mut seen = vec![false; m + 1];
            for &a in &actions {
                if std::mem::replace(&mut seen[a], true) {
                    report.tiebreak_disagreements += 1;
                }
            }
            settled.push(first.unwrap().assignment().to_vec());
        } else {
            report.tiebreak_disagreements += 1;
        }
    }
    (report, settled)
}

/// Criterion-scale sweep: every `k <= max_k`, `m <= max_m`, every ID set,
/// random and fully tied estimates, one and two rounds.
pub fn schedule_soundness<R: Rng>(max_k: usize, max_m: usize, rng: &mut R) -> ScheduleReport {
    let mut total = ScheduleReport::default();
    for m in 2..=max_m {
        for k in 1..=max_k.min(m) {
            total.add(&verify_soundness(k, m));
            for rounds in 1..=2 {
                for mode in [TiebreakMode::Protocol, TiebreakMode::Deterministic] {
                    let (r, _) = comm_soundness(k, m, rounds, mode, |ids| {
                        ids.iter().map(|_| vec![0.5; m]).collect()
                    });
                    total.add(&r);
                    let (r, _) = comm_soundness(k, m, rounds, mode, |ids| {
                        ids.iter()
                            .map(|_| {
                                (0..m)
                                    .map(|_| rng.random_range(0..=4) as f64 / 4.0)
                                    .collect()
                            })
                            .collect()
                    });
                    total.add(&r);
                    let (r, _) = comm_soundness(k, m, rounds, mode, |ids| {
                        ids.iter()
                            .map(|_| (0..m).map(|_| rng.random::<f64>()).collect())
                            .collect()
                    });
                    total.add(&r);
                }
            }
        }
    }
    total
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PerturbationOutcome {
    pub trials: u64,
    /// A non-optimal matching strictly beat every true optimum.
    pub strict_violations: u64,
    /// A non-optimal matching tied the perturbed maximum exactly.
    pub boundary_ties: u64,
    /// Ties seen with `k < m`, where the margin is strictly positive.
    pub ties_below_square: u64,
}

impl PerturbationOutcome {
    pub fn add(&mut self, o: &PerturbationOutcome) {
        self.trials += o.trials;
        self.strict_violations += o.strict_violations;
        self.boundary_ties += o.boundary_ties;
        self.ties_below_square += o.ties_below_square;
    }
}

/// Perturbs `rows` entrywise by at most the exact gap and checks that the
/// perturbed maximizers stay inside the true optimal set. Uses random
/// interior offsets, random `±delta` corners, and corners aimed at each
/// runner-up matching.
pub fn perturbation_check<R: Rng>(rows: &[Vec<f64>], rng: &mut R) -> PerturbationOutcome {
    let k = rows.len();
    let m = rows[0].len();
    let exact_rows = exact_rows(rows);
    let truth = brute_force(&exact_rows);
    let mut out = PerturbationOutcome::default();
    let Some(j2) = truth.j2.clone() else {
        return out;
    };
    let delta = (&truth.j1 - &j2) / BigRational::from_integer(BigInt::from(2 * m));

    let runners_up: Vec<Vec<usize>> = all_matchings(k, m)
        .into_iter()
        .filter(|a| reward(&exact_rows, a) == j2)
        .take(4)
        .collect();
    let mut signs: Vec<Vec<Vec<i64>>> = Vec::new();
    for _ in 0..3 {
        signs.push(
            (0..k)
                .map(|_| (0..m).map(|_| rng.random_range(-1000..=1000)).collect())
                .collect(),
        );
        signs.push(
            (0..k)
                .map(|_| {
                    (0..m)
                        .map(|_| if rng.random() { 1000 } else { -1000 })
                        .collect()
                })
                .collect(),
        );
    }
    for target in &runners_up {
        for opt in truth.optimal.iter().take(2) {
            let mut s: Vec<Vec<i64>> = (0..k)
                .map(|_| {
                    (0..m)
                        .map(|_| if rng.random() { 1000 } else { -1000 })
                        .collect()
                })
                .collect();
            for j in 0..k {
                s[j][opt[j] - 1] = -1000;
                s[j][target[j] - 1] = 1000;
            }
            signs.push(s);
        }
    }

    let thousand = BigRational::from_integer(1000.into());
    for s in signs {
        out.trials += 1;
        let perturbed: Vec<Vec<BigRational>> = exact_rows
            .iter()
            .zip(&s)
            .map(|(row, sr)| {
                row.iter()
                    .zip(sr)
                    .map(|(x, &n)| x + &delta * BigRational::from_integer(n.into()) / &thousand)
                    .collect()
            })
            .collect();
        let p = brute_force(&perturbed);
        let intruders = p
            .optimal
            .iter()
            .filter(|a| !truth.optimal.contains(a))
            .count();
        if intruders == 0 {
            continue;
        }
        if p.optimal.iter().any(|a| truth.optimal.contains(a)) {
            out.boundary_ties += 1;
            if k < m {
                out.ties_below_square += 1;
            }
        } else {
            out.strict_violations += 1;
        }
    }
    out
}
