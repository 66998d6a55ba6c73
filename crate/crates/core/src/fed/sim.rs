use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, SparseExample};
use crate::error::{Error, Result};
use crate::net::{eval_subset, precision_at_1, NetWeights};

use super::config::{FedConfig, Method};
use super::device::{partition_iid, Device, LocalRoundStats};
use super::message::{Downlink, LinkObserver, NoObserver, Uplink};
use super::server::Server;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviceRoundStats {
    pub device: usize,
    pub bytes_down: u64,
    pub bytes_up: u64,
    /// `|Θ_i|` after label injection.
    pub theta_len: usize,
    /// Largest target-layer footprint during the round, in reals.
    pub peak_target_reals: usize,
    pub local: LocalRoundStats,
}

/// One ledger row.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub method: String,
    pub device_count: usize,
    pub bytes_down: u64,
    pub bytes_up: u64,
    /// Mean over devices of the per-sample active fraction `|active|/n`.
    pub avg_active_frac: f64,
    /// Mean over devices of `|Θ_i|/n`.
    pub avg_theta_frac: f64,
    pub loss: f64,
    pub p_at_1: Option<f64>,
    pub devices: Vec<DeviceRoundStats>,
}

/// Drives Alg-style rounds: broadcast, on-device selection, column grant,
/// local training, aggregation.
pub struct Simulator<'a, O: LinkObserver = NoObserver> {
    cfg: FedConfig,
    train: &'a Dataset,
    eval: Vec<&'a SparseExample>,
    server: Server,
    devices: Vec<Device>,
    observer: O,
    round: usize,
    steps_done: usize,
}

impl<'a> Simulator<'a, NoObserver> {
    pub fn new(cfg: FedConfig, train: &'a Dataset, test: &'a Dataset) -> Result<Self> {
        Self::with_observer(cfg, train, test, NoObserver)
    }
}

impl<'a, O: LinkObserver> Simulator<'a, O> {
    pub fn with_observer(cfg: FedConfig, train: &'a Dataset, test: &'a Dataset, observer: O) -> Result<Self> {
        cfg.validate()?;
        train.validate()?;
        if train.is_empty() {
            return Err(Error::param("empty training set"));
        }
        if test.num_labels != train.num_labels || test.num_features != train.num_features {
            return Err(Error::param("train and test dimensions differ"));
        }
        let n = train.num_labels;
        cfg.column_cap(n)?;
        let model = NetWeights::init(train.num_features, cfg.hidden_dim, n, cfg.seed)?;
        let shards = partition_iid(train.len(), cfg.num_devices, cfg.seed)?;
        let mut devices = Vec::with_capacity(shards.len());
        for (id, shard) in shards.into_iter().enumerate() {
            if shard.is_empty() {
                log::warn!("device {id} has an empty shard and is excluded");
                continue;
            }
            devices.push(Device::new(id, shard, &cfg, train.num_features, n));
        }
        let eval = eval_subset(test.len(), cfg.eval_size, cfg.seed).into_iter().map(|i| &test.examples[i]).collect();
        Ok(Simulator { server: Server::new(model, &cfg), cfg, train, eval, devices, observer, round: 0, steps_done: 0 })
    }

    pub fn config(&self) -> &FedConfig {
        &self.cfg
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn devices_mut(&mut self) -> &mut [Device] {
        &mut self.devices
    }

    pub fn observer(&self) -> &O {
        &self.observer
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done >= self.cfg.total_steps
    }

    pub fn into_parts(self) -> (NetWeights, O) {
        (self.server.into_model(), self.observer)
    }

    fn send_down(&mut self, device: usize, msg: &Downlink, bytes: &mut u64) {
        *bytes += msg.bytes();
        self.observer.on_downlink(device, msg);
    }

    fn send_up(&mut self, device: usize, msg: &Uplink, bytes: &mut u64) {
        *bytes += msg.bytes();
        self.observer.on_uplink(device, msg);
    }

    pub fn run_round(&mut self) -> Result<RoundRecord> {
        self.round += 1;
        let steps = self.cfg.steps_per_lsh.min(self.cfg.total_steps.saturating_sub(self.steps_done));
        let broadcast = Downlink::Broadcast(self.server.broadcast(self.round)?);
        let mut updates = Vec::with_capacity(self.devices.len());
        let mut per_device = Vec::with_capacity(self.devices.len());
        for i in 0..self.devices.len() {
            let id = self.devices[i].id();
            let (mut down, mut up) = (0, 0);
            self.send_down(id, &broadcast, &mut down);
            let Downlink::Broadcast(b) = &broadcast else { unreachable!() };
            self.devices[i].receive_broadcast(b);
            if let Some(req) = self.devices[i].select(self.train, &self.cfg)? {
                let req = Uplink::Request(req);
                self.send_up(id, &req, &mut up);
                let Uplink::Request(req) = req else { unreachable!() };
                // FedSLIDE devices already hold the full layer
                if !matches!(self.cfg.method, Method::FedSlideSimHash | Method::FedSlideDwta) {
                    let msg = Downlink::Grant(self.server.grant(&req)?);
                    self.send_down(id, &msg, &mut down);
                    let Downlink::Grant(g) = msg else { unreachable!() };
                    self.devices[i].receive_grant(g)?;
                }
            }
            let local = self.devices[i].train(self.train, &self.cfg, steps)?;
            let update = Uplink::Update(self.devices[i].make_update()?);
            self.send_up(id, &update, &mut up);
            let Uplink::Update(u) = update else { unreachable!() };
            updates.push(u);
            let d = &self.devices[i];
            per_device.push(DeviceRoundStats {
                device: d.id(),
                bytes_down: down,
                bytes_up: up,
                theta_len: d.theta().len(),
                peak_target_reals: d.memory().peak,
                local,
            });
        }
        self.server.aggregate(&updates)?;
        self.steps_done += steps;

        let k = per_device.len().max(1) as f64;
        let n = self.server.model().num_neurons() as f64;
        let eval_now =
            self.cfg.eval_every > 0 && (self.round.is_multiple_of(self.cfg.eval_every) || self.is_finished());
        let p_at_1 = if eval_now { precision_at_1(self.server.model(), &self.eval)? } else { None };
        if !self.server.model().is_finite() {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(RoundRecord {
            round: self.round,
            method: String::from(self.cfg.method.name()),
            device_count: per_device.len(),
            bytes_down: per_device.iter().map(|d| d.bytes_down).sum(),
            bytes_up: per_device.iter().map(|d| d.bytes_up).sum(),
            avg_active_frac: per_device.iter().map(|d| d.local.active_frac).sum::<f64>() / k,
            avg_theta_frac: per_device.iter().map(|d| d.theta_len as f64).sum::<f64>() / (k * n),
            loss: per_device.iter().map(|d| d.local.loss).sum::<f64>() / k,
            p_at_1,
            devices: per_device,
        })
    }

    /// Runs the remaining rounds, passing each record to `on_round`.
    pub fn run_with(&mut self, mut on_round: impl FnMut(&RoundRecord)) -> Result<Vec<RoundRecord>> {
        let mut rows = Vec::with_capacity(self.cfg.rounds());
        while !self.is_finished() {
            let r = self.run_round()?;
            on_round(&r);
            rows.push(r);
        }
        Ok(rows)
    }

    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        self.run_with(|_| {})
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: NetWeights,
    pub ledger: Vec<RoundRecord>,
}

pub fn run_experiment(cfg: FedConfig, train: &Dataset, test: &Dataset) -> Result<Experiment> {
    let mut sim = Simulator::new(cfg, train, test)?;
    let ledger = sim.run()?;
    Ok(Experiment { model: sim.into_parts().0, ledger })
}
