use serde::{Deserialize, Serialize};

use crate::net::LinkId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkLeg {
    pub link: LinkId,
    pub enter: u64,
    pub leave: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripRecord {
    pub vehicle: VehicleId,
    pub entry_time: u64,
    pub exit_time: Option<u64>,
    pub legs: Vec<LinkLeg>,
}

impl TripRecord {
    pub fn travel_time(&self) -> Option<u64> {
        self.exit_time.map(|x| x - self.entry_time)
    }

    pub fn route(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.legs.iter().map(|l| l.link)
    }
}
