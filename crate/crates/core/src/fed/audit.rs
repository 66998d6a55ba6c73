//! Information-flow check on the uplink.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::device::DeviceSecrets;
use super::message::{Downlink, LinkObserver, Uplink};

/// Records every uplink payload by device so it can be compared against the
/// values each device was supposed to keep to itself. Input hash codes have
/// no representation in any uplink type, so only reals and words are checked.
#[derive(Debug, Clone, Default)]
pub struct UplinkAudit {
    reals: BTreeMap<usize, BTreeSet<u64>>,
    words: BTreeMap<usize, BTreeSet<u64>>,
    messages: usize,
}

/// One secret value found in a device's uplink traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct Leak {
    pub device: usize,
    pub what: &'static str,
    pub value: String,
}

impl UplinkAudit {
    pub fn messages(&self) -> usize {
        self.messages
    }

    /// Secret values of `device` that showed up in its uplink. Exact zeros are
    /// ignored since they carry no information.
    pub fn leaks(&self, device: usize, secrets: &DeviceSecrets) -> Vec<Leak> {
        let mut out = Vec::new();
        let empty = BTreeSet::new();
        let reals = self.reals.get(&device).unwrap_or(&empty);
        let words = self.words.get(&device).unwrap_or(&empty);
        let mut check_reals = |what: &'static str, values: &[f64]| {
            for &v in values {
                if v != 0.0 && reals.contains(&v.to_bits()) {
                    out.push(Leak { device, what, value: format!("{v}") });
                }
            }
        };
        check_reals("feature value", &secrets.feature_values);
        check_reals("hidden activation", &secrets.hidden_values);
        check_reals("hash parameter", &secrets.projection_values);
        for &s in &secrets.hash_seeds {
            if words.contains(&s) || reals.contains(&s) {
                out.push(Leak { device, what: "hash seed", value: format!("{s}") });
            }
        }
        out
    }
}

impl LinkObserver for UplinkAudit {
    fn on_downlink(&mut self, _device: usize, _msg: &Downlink) {}

    fn on_uplink(&mut self, device: usize, msg: &Uplink) {
        self.messages += 1;
        let reals = self.reals.entry(device).or_default();
        let words = self.words.entry(device).or_default();
        match msg {
            Uplink::Request(r) => words.extend(r.neurons.iter().map(|j| j as u64)),
            Uplink::Update(u) => {
                let h = &u.hidden;
                let c = &u.columns;
                for v in h.w.as_slice().iter().chain(&h.b).chain(c.weights().as_slice()).chain(c.biases()) {
                    reals.insert(v.to_bits());
                }
                words.extend(c.neurons().iter().map(|&j| j as u64));
            }
        }
    }
}
