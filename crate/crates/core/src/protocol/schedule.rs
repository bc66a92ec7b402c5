use super::ProtocolParams;

/// Channel visited at sub-step `s` by the agent with 1-based `id` during an
/// offset scan. Distinct IDs never meet, and every channel is visited once
/// per `m` sub-steps.
#[inline]
pub fn offset_scan_channel(id: usize, s: u64, m: usize) -> usize {
    ((id - 1 + (s % m as u64) as usize) % m) + 1
}

/// Phase lengths of one epoch as seen by every agent.
///
/// The fixing and verification phases only exist until all users hold
/// distinct IDs. A failed verification replaces the remainder of the epoch
/// with a random-access segment of `gamma * m + 2^epoch` steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSchedule {
    pub fixing: u64,
    pub verify: u64,
    pub explore: u64,
    pub match_comm: u64,
    pub tiebreak: u64,
    pub exploit: u64,
    pub degraded: u64,
}

impl EpochSchedule {
    /// Length of the exploitation segment, `2^epoch`.
    pub fn exploit_len(epoch: u32) -> u64 {
        1u64.checked_shl(epoch).unwrap_or(u64::MAX)
    }

    /// Communication length for a given set of present ID slots: an `m`-step
    /// presence probe per slot plus `m * rounds` scan windows of `m` steps
    /// for every present slot.
    pub fn match_comm_len(params: &ProtocolParams, present: usize) -> u64 {
        let m = params.m as u64;
        m * m + present as u64 * m * params.rounds as u64 * m
    }

    /// Schedule of an epoch that runs the full protocol. `tiebreak_windows`
    /// is the number of leader windows the shared candidate set needs.
    pub fn fixed(
        params: &ProtocolParams,
        epoch: u32,
        with_fixing: bool,
        present: usize,
        tiebreak_windows: u64,
    ) -> Self {
        let m = params.m as u64;
        Self {
            fixing: if with_fixing { params.t_fix } else { 0 },
            verify: if with_fixing { m } else { 0 },
            explore: params.gamma * m,
            match_comm: Self::match_comm_len(params, present),
            tiebreak: tiebreak_windows * m,
            exploit: Self::exploit_len(epoch),
            degraded: 0,
        }
    }

    /// Schedule of an epoch whose verification failed.
    pub fn failed(params: &ProtocolParams, epoch: u32) -> Self {
        let m = params.m as u64;
        Self {
            fixing: params.t_fix,
            verify: m,
            explore: 0,
            match_comm: 0,
            tiebreak: 0,
            exploit: 0,
            degraded: params.gamma * m + Self::exploit_len(epoch),
        }
    }

    /// Offsets (from the epoch start) at which each phase ends, in order
    /// fixing, verify, explore, match, tiebreak, exploit, degraded.
    pub fn boundaries(&self) -> [u64; 7] {
        let mut acc = 0u64;
        [
            self.fixing,
            self.verify,
            self.explore,
            self.match_comm,
            self.tiebreak,
            self.exploit,
            self.degraded,
        ]
        .map(|len| {
            acc = acc.saturating_add(len);
            acc
        })
    }

    pub fn total(&self) -> u64 {
        self.boundaries()[6]
    }
}
