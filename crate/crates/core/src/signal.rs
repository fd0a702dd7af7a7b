//! Four-phase fixed-order signal timing driven by one scalar, the split.
//!
//! The split is the north-south green time (through phase plus left phase).
//! Yellow and all-red follow every phase and are not part of the split, so
//! the east-west phases absorb whatever green remains in the cycle.
//!
//! Phase order within a cycle, anchored at `(t - offset) mod cycle == 0`:
//! P1 NS through/right, P2 NS left, P3 EW through/right, P4 EW left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Axis, Movement, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConstants {
    pub cycle: u32,
    pub left_phase: u32,
    pub yellow: u32,
    pub all_red: u32,
    pub offset: u32,
    pub s_lb: u32,
    pub s_ub: u32,
    pub delta_s: u32,
    pub default_split: u32,
}

impl Default for SignalConstants {
    fn default() -> Self {
        Self {
            cycle: 100,
            left_phase: 8,
            yellow: 2,
            all_red: 2,
            offset: 0,
            s_lb: 30,
            s_ub: 70,
            delta_s: 3,
            default_split: 50,
        }
    }
}

impl SignalConstants {
    pub fn transition(&self) -> u32 {
        self.yellow + self.all_red
    }

    /// Green time shared by all four phases.
    pub fn total_green(&self) -> i64 {
        i64::from(self.cycle) - 4 * i64::from(self.transition())
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_s == 0 {
            return Err(Error::InfeasibleConstants("delta_s must be positive".into()));
        }
        if !(self.s_lb <= self.default_split && self.default_split <= self.s_ub) {
            return Err(Error::InfeasibleConstants(format!(
                "default split {} outside [{}, {}]",
                self.default_split, self.s_lb, self.s_ub
            )));
        }
        if self.s_lb <= self.left_phase {
            return Err(Error::InfeasibleConstants(format!(
                "s_lb {} leaves no NS through green after the {} s left phase",
                self.s_lb, self.left_phase
            )));
        }
        let p3_min = self.total_green() - i64::from(self.s_ub) - i64::from(self.left_phase);
        if p3_min <= 0 {
            return Err(Error::InfeasibleConstants(format!(
                "split {} leaves {} s of EW through green",
                self.s_ub, p3_min
            )));
        }
        if self.left_phase == 0 {
            return Err(Error::InfeasibleConstants("left phase must be positive".into()));
        }
        Ok(())
    }

    pub fn check_split(&self, split: u32) -> Result<()> {
        if split < self.s_lb || split > self.s_ub {
            return Err(Error::SplitOutOfBounds {
                split,
                lower: self.s_lb,
                upper: self.s_ub,
            });
        }
        Ok(())
    }

    /// Every split on the `delta_s` grid starting at `s_lb`, plus `s_ub`.
    pub fn split_grid(&self) -> Vec<u32> {
        let mut grid: Vec<u32> = (self.s_lb..=self.s_ub)
            .step_by(self.delta_s.max(1) as usize)
            .collect();
        if grid.last() != Some(&self.s_ub) {
            grid.push(self.s_ub);
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub phase1_ns_through: u32,
    pub phase2_ns_left: u32,
    pub phase3_ew_through: u32,
    pub phase4_ew_left: u32,
    pub yellow: u32,
    pub all_red: u32,
}

impl PhaseTable {
    pub fn transition(&self) -> u32 {
        self.yellow + self.all_red
    }

    pub fn greens(&self) -> [u32; 4] {
        [
            self.phase1_ns_through,
            self.phase2_ns_left,
            self.phase3_ew_through,
            self.phase4_ew_left,
        ]
    }

    pub fn cycle(&self) -> u32 {
        self.greens().iter().sum::<u32>() + 4 * self.transition()
    }
}

pub fn derive_phase_table(split: u32, constants: &SignalConstants) -> Result<PhaseTable> {
    constants.check_split(split)?;
    let phase1 = i64::from(split) - i64::from(constants.left_phase);
    let phase3 = constants.total_green() - i64::from(split) - i64::from(constants.left_phase);
    if phase1 <= 0 || phase3 <= 0 {
        return Err(Error::InfeasibleConstants(format!(
            "split {split} gives P1={phase1} s, P3={phase3} s"
        )));
    }
    Ok(PhaseTable {
        phase1_ns_through: phase1 as u32,
        phase2_ns_left: constants.left_phase,
        phase3_ew_through: phase3 as u32,
        phase4_ew_left: constants.left_phase,
        yellow: constants.yellow,
        all_red: constants.all_red,
    })
}

/// Movement groups served by one phase each, in phase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalGroup {
    NsThrough,
    NsLeft,
    EwThrough,
    EwLeft,
}

impl SignalGroup {
    pub const ALL: [SignalGroup; 4] = [
        SignalGroup::NsThrough,
        SignalGroup::NsLeft,
        SignalGroup::EwThrough,
        SignalGroup::EwLeft,
    ];

    /// Right turns run with the through phase.
    pub fn for_movement(axis: Axis, movement: Movement) -> SignalGroup {
        match (axis, movement) {
            (Axis::NorthSouth, Movement::Left) => SignalGroup::NsLeft,
            (Axis::NorthSouth, _) => SignalGroup::NsThrough,
            (Axis::EastWest, Movement::Left) => SignalGroup::EwLeft,
            (Axis::EastWest, _) => SignalGroup::EwThrough,
        }
    }

    pub fn through(axis: Axis) -> SignalGroup {
        Self::for_movement(axis, Movement::Straight)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Indication {
    Green,
    Yellow,
    Red,
}

/// Indications for all four groups at one instant, indexed in phase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalState(pub [Indication; 4]);

impl SignalState {
    pub fn get(&self, group: SignalGroup) -> Indication {
        self.0[group.index()]
    }

    pub fn is_all_red(&self) -> bool {
        self.0.iter().all(|&i| i == Indication::Red)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub intersection: NodeId,
    split: u32,
    pending_split: Option<u32>,
    offset: u32,
    constants: SignalConstants,
}

impl SignalPlan {
    pub fn new(intersection: NodeId, split: u32, constants: SignalConstants) -> Result<Self> {
        constants.validate()?;
        constants.check_split(split)?;
        Ok(Self {
            intersection,
            split,
            pending_split: None,
            offset: constants.offset,
            constants,
        })
    }

    pub fn with_offset(mut self, offset: u32) -> Self {
        self.offset = offset % self.constants.cycle;
        self
    }

    pub fn split(&self) -> u32 {
        self.split
    }

    pub fn pending_split(&self) -> Option<u32> {
        self.pending_split
    }

    pub fn offset(&self) -> u32 {
        self.offset
    }

    pub fn constants(&self) -> &SignalConstants {
        &self.constants
    }

    pub fn phase_table(&self) -> PhaseTable {
        derive_phase_table(self.split, &self.constants)
            .expect("split and constants are validated on every write")
    }

    /// Seconds into the current cycle at time `t`.
    pub fn cycle_position(&self, t: u64) -> u32 {
        let cycle = i64::from(self.constants.cycle);
        (t as i64 - i64::from(self.offset)).rem_euclid(cycle) as u32
    }

    pub fn is_cycle_start(&self, t: u64) -> bool {
        self.cycle_position(t) == 0
    }

    /// Queue a split change of `delta` seconds for the next cycle start.
    ///
    /// The new value is `clamp(split + delta)` against the active split and
    /// replaces any change already pending. A zero delta changes nothing.
    pub fn apply_split_delta(&mut self, delta: i32) -> Result<()> {
        let ds = self.constants.delta_s as i32;
        if delta != -ds && delta != 0 && delta != ds {
            return Err(Error::InvalidAction(format!(
                "split delta {delta} not in {{-{ds}, 0, {ds}}}"
            )));
        }
        if delta == 0 {
            return Ok(());
        }
        let target = (i64::from(self.split) + i64::from(delta))
            .clamp(i64::from(self.constants.s_lb), i64::from(self.constants.s_ub));
        self.pending_split = Some(target as u32);
        Ok(())
    }

    /// Activate a pending split if `t` is a cycle start. Returns true when
    /// the active split changed.
    pub fn roll_over(&mut self, t: u64) -> bool {
        if !self.is_cycle_start(t) {
            return false;
        }
        match self.pending_split.take() {
            Some(s) if s != self.split => {
                self.split = s;
                true
            }
            _ => false,
        }
    }

    pub fn movement_signal(&self, t: u64) -> SignalState {
        let table = self.phase_table();
        let pos = self.cycle_position(t);
        let mut state = [Indication::Red; 4];
        let mut start = 0;
        for (i, green) in table.greens().into_iter().enumerate() {
            if pos < start + green {
                state[i] = Indication::Green;
                break;
            }
            if pos < start + green + table.yellow {
                state[i] = Indication::Yellow;
                break;
            }
            start += green + table.transition();
            if pos < start {
                break;
            }
        }
        SignalState(state)
    }

    /// Seconds since `group` turned green, or `None` when it is not green.
    pub fn green_elapsed(&self, t: u64, group: SignalGroup) -> Option<u32> {
        let table = self.phase_table();
        let pos = self.cycle_position(t);
        let greens = table.greens();
        let start: u32 = greens[..group.index()]
            .iter()
            .map(|g| g + table.transition())
            .sum();
        (pos >= start && pos < start + greens[group.index()]).then(|| pos - start)
    }

    /// Green duration for `group` under the active split.
    pub fn effective_green(&self, group: SignalGroup) -> u32 {
        let table = self.phase_table();
        table.greens()[group.index()]
    }

    /// Through-movement green for `axis` at the default split.
    pub fn default_effective_green(constants: &SignalConstants, axis: Axis) -> Result<u32> {
        let table = derive_phase_table(constants.default_split, constants)?;
        Ok(match axis {
            Axis::NorthSouth => table.phase1_ns_through,
            Axis::EastWest => table.phase3_ew_through,
        })
    }
}
