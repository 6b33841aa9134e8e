//! Bistable gripper and detachable holder.
//!
//! The holder is pushed into its mounting groove (`Seated`) and then fixed by
//! the locking lever (`Locked`). Only a locked holder can be gripped. The
//! toggle linkage keeps either grip state without actuation, so the state only
//! changes on an explicit command.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grip {
    Released,
    Gripped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Holder {
    Detached,
    Seated,
    Locked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PushRod {
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GripperCommand {
    RotateCw,
    RotateCcw,
    SeatHolder,
    LockLever,
    UnlockLever,
    RemoveHolder,
}

impl GripperCommand {
    pub const ALL: [GripperCommand; 6] = [
        GripperCommand::RotateCw,
        GripperCommand::RotateCcw,
        GripperCommand::SeatHolder,
        GripperCommand::LockLever,
        GripperCommand::UnlockLever,
        GripperCommand::RemoveHolder,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            GripperCommand::RotateCw => "rotate_cw",
            GripperCommand::RotateCcw => "rotate_ccw",
            GripperCommand::SeatHolder => "seat_holder",
            GripperCommand::LockLever => "lock_lever",
            GripperCommand::UnlockLever => "unlock_lever",
            GripperCommand::RemoveHolder => "remove_holder",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GripperState {
    pub grip: Grip,
    pub holder: Holder,
    pub push_rod: PushRod,
}

impl Default for GripperState {
    fn default() -> Self {
        Self {
            grip: Grip::Released,
            holder: Holder::Detached,
            push_rod: PushRod::Ccw,
        }
    }
}

impl fmt::Display for GripperState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?}, push rod {:?})", self.holder, self.grip, self.push_rod)
    }
}

impl GripperState {
    /// A locked, released holder: the state after the mounting sequence.
    pub fn mounted() -> Self {
        Self {
            grip: Grip::Released,
            holder: Holder::Locked,
            push_rod: PushRod::Ccw,
        }
    }

    pub fn is_valid(&self) -> bool {
        let grip_needs_lock = self.grip == Grip::Released || self.holder == Holder::Locked;
        let rod_matches_grip = (self.push_rod == PushRod::Cw) == (self.grip == Grip::Gripped);
        grip_needs_lock && rod_matches_grip
    }

    pub fn dispatch(self, cmd: GripperCommand) -> Result<GripperState> {
        use GripperCommand::*;
        let reject = || Error::Transition {
            state: self,
            command: cmd,
        };
        let next = match (cmd, self.holder) {
            (RotateCw, Holder::Locked) => GripperState {
                grip: Grip::Gripped,
                push_rod: PushRod::Cw,
                ..self
            },
            (RotateCcw, Holder::Seated | Holder::Locked) => GripperState {
                grip: Grip::Released,
                push_rod: PushRod::Ccw,
                ..self
            },
            (SeatHolder, Holder::Detached) => GripperState {
                holder: Holder::Seated,
                ..self
            },
            (LockLever, Holder::Seated) => GripperState {
                holder: Holder::Locked,
                ..self
            },
            (UnlockLever, Holder::Locked) if self.grip == Grip::Released => GripperState {
                holder: Holder::Seated,
                ..self
            },
            (RemoveHolder, Holder::Seated) => GripperState {
                holder: Holder::Detached,
                ..self
            },
            _ => return Err(reject()),
        };
        log::trace!("gripper {:?}: {} -> {}", cmd, self, next);
        Ok(next)
    }

    /// One control tick with no actuation input.
    pub fn idle(self) -> GripperState {
        self
    }

    pub fn transmits_force(&self) -> bool {
        self.grip == Grip::Gripped && self.holder == Holder::Locked
    }
}
