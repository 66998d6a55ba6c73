//! Everything that crosses the host/device boundary.
//!
//! The uplink carries only index sets and weight updates; there is no
//! variant able to hold inputs, activations, hash codes or hash seeds.

use crate::fold::{FoldKind, FoldingOperator};
use crate::matrix::Matrix;
use crate::net::{ActiveColumns, HiddenLayer, OutputLayer};
use crate::sampling::NeuronSet;

/// Bytes per transmitted real or index.
pub const WORD_BYTES: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetPayload {
    /// `B·W2` for the sketch methods, one row per neuron, with the folding
    /// operator the device must apply to its own inputs.
    Sketch { fold: FoldingOperator, sketch: Matrix },
    /// The whole target layer.
    Full(OutputLayer),
    /// Nothing; the device requests columns blind.
    Nothing,
}

/// Host → device at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    /// Pre-target weights `W_A`.
    pub hidden: HiddenLayer,
    pub target: TargetPayload,
}

/// Host → device: the requested target-layer columns `W2[:, Θ_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGrant {
    pub columns: ActiveColumns,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Downlink {
    Broadcast(Broadcast),
    Grant(ColumnGrant),
}

/// Device → host: the activated neuron set Θ_i.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRequest {
    pub neurons: NeuronSet,
}

/// Device → host at the end of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceUpdate {
    pub hidden: HiddenLayer,
    pub columns: ActiveColumns,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Uplink {
    Request(ColumnRequest),
    Update(DeviceUpdate),
}

fn hidden_words(h: &HiddenLayer) -> u64 {
    (h.w.len() + h.b.len()) as u64
}

impl Downlink {
    pub fn bytes(&self) -> u64 {
        WORD_BYTES
            * match self {
                Downlink::Broadcast(b) => {
                    hidden_words(&b.hidden)
                        + match &b.target {
                            TargetPayload::Sketch { fold, sketch } => {
                                let coords = match fold.kind() {
                                    FoldKind::IdentityTiling => 0,
                                    FoldKind::PermuteTruncate(_) => fold.sketch_dim() as u64,
                                };
                                sketch.len() as u64 + coords
                            }
                            TargetPayload::Full(o) => (o.w.len() + o.b.len()) as u64,
                            TargetPayload::Nothing => 0,
                        }
                }
                // the device already knows which indices it asked for
                Downlink::Grant(g) => g.columns.reals() as u64,
            }
    }
}

impl Uplink {
    pub fn bytes(&self) -> u64 {
        WORD_BYTES
            * match self {
                Uplink::Request(r) => r.neurons.len() as u64,
                Uplink::Update(u) => hidden_words(&u.hidden) + u.columns.reals() as u64,
            }
    }
}

/// Sees every message in transit. The simulator calls it for each send.
pub trait LinkObserver {
    fn on_downlink(&mut self, _device: usize, _msg: &Downlink) {}
    fn on_uplink(&mut self, _device: usize, _msg: &Uplink) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl LinkObserver for NoObserver {}
