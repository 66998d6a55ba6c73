//! Federated simulation: a host holding the model and devices that pick
//! their own active output neurons.

mod audit;
mod config;
mod device;
mod lsh;
mod message;
mod server;
mod sim;

pub use audit::{Leak, UplinkAudit};
pub use config::{ActivationScope, FedConfig, Method};
pub use device::{partition_iid, Device, DeviceSecrets, LocalRoundStats, MemoryMeter};
pub use lsh::{device_lsh, LshOutcome};
pub use message::{
    Broadcast, ColumnGrant, ColumnRequest, DeviceUpdate, Downlink, LinkObserver, NoObserver, TargetPayload, Uplink,
    WORD_BYTES,
};
pub use server::Server;
pub use sim::{run_experiment, DeviceRoundStats, Experiment, RoundRecord, Simulator};
