//! Supervisor decisions: threshold admission, experienced delay, per-device
//! service scheduling, request dispatch and the maximum-delay constraint.
//!
//! Two policy kinds share the admission rule. `Lyapunov` serves the longest
//! queues first and dispatches using the devices' exposed residual capacity.
//! `Baseline` splits service evenly and dispatches without looking at any
//! device information.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceState, ServiceId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("service {} has no hosting container", .0 .0)]
    NoHost(ServiceId),
    #[error("residual view has {got} entries for {expected} devices")]
    ViewMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Lyapunov,
    Baseline,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Lyapunov => "lyapunov",
            PolicyKind::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionDirection {
    /// Admit while `V·α − ω > 0`, the maximiser of `Rq·(V·α − ω)`.
    ObjectiveConsistent,
    /// Admit while `ω > V·α`.
    PaperText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    /// `λ/C + queue`.
    Literal,
    /// `λ/C + queue/C`.
    Normalized,
}

fn default_d_max() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Trade-off control `V`, dimensionless.
    pub v: f64,
    /// Weight `α` of the accepted requests' average demand.
    pub alpha: f64,
    /// Maximum per-container delay in slots.
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    pub kind: PolicyKind,
    pub admission_direction: AdmissionDirection,
    pub delay_model: DelayModel,
    /// Per-device `α`, keyed by device id (`fn1-d2`).
    #[serde(default)]
    pub alpha_overrides: BTreeMap<String, f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            v: 0.5,
            alpha: 10.0,
            d_max: f64::INFINITY,
            kind: PolicyKind::Lyapunov,
            admission_direction: AdmissionDirection::ObjectiveConsistent,
            delay_model: DelayModel::Normalized,
            alpha_overrides: BTreeMap::new(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.v.is_finite() && self.v >= 0.0) {
            return Err(PolicyError::InvalidConfig(format!("v = {} must be >= 0", self.v)));
        }
        for (who, alpha) in std::iter::once(("alpha", &self.alpha))
            .chain(self.alpha_overrides.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if !(alpha.is_finite() && *alpha > 0.0) {
                return Err(PolicyError::InvalidConfig(format!("{who}: alpha = {alpha} must be > 0")));
            }
        }
        if self.d_max.is_nan() || self.d_max <= 0.0 {
            return Err(PolicyError::InvalidConfig(format!("d_max = {} must be > 0", self.d_max)));
        }
        Ok(())
    }

    pub fn alpha_for(&self, device: &str) -> f64 {
        self.alpha_overrides.get(device).copied().unwrap_or(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admission {
    pub admitted: u64,
    pub rejected: u64,
}

/// All-or-nothing admission of `arrivals` given the container queue.
pub fn admit(queue: u64, arrivals: u64, cfg: &PolicyConfig) -> Admission {
    admit_with_alpha(queue, arrivals, cfg, cfg.alpha)
}

pub fn admit_with_alpha(queue: u64, arrivals: u64, cfg: &PolicyConfig, alpha: f64) -> Admission {
    let threshold = cfg.v * alpha;
    let omega = queue as f64;
    let accept = match cfg.admission_direction {
        AdmissionDirection::ObjectiveConsistent => threshold - omega > 0.0,
        AdmissionDirection::PaperText => omega > threshold,
    };
    let admitted = if accept { arrivals } else { 0 };
    Admission {
        admitted,
        rejected: arrivals - admitted,
    }
}

/// Experienced delay in slots of a container with rate `lambda`, capacity
/// `cmax` and `queue` waiting requests.
pub fn delay(lambda: f64, cmax: u32, queue: u64, model: DelayModel) -> f64 {
    let c = f64::from(cmax.max(1));
    match model {
        DelayModel::Literal => lambda / c + queue as f64,
        DelayModel::Normalized => lambda / c + queue as f64 / c,
    }
}

/// Largest queue whose delay stays within `d_max`: `None` when unbounded,
/// `Some(-1)` when not even an empty queue fits.
fn max_queue_within(lambda: f64, cmax: u32, d_max: f64, model: DelayModel) -> Option<i128> {
    if d_max.is_infinite() {
        return None;
    }
    let c = f64::from(cmax.max(1));
    let slack = d_max - lambda / c;
    let estimate = match model {
        DelayModel::Literal => slack,
        DelayModel::Normalized => slack * c,
    };
    if estimate < 0.0 {
        return Some(-1);
    }
    // Settle rounding against the delay function itself.
    let mut q = estimate.floor() as i128;
    while q >= 0 && delay(lambda, cmax, q as u64, model) > d_max {
        q -= 1;
    }
    while delay(lambda, cmax, (q + 1) as u64, model) <= d_max {
        q += 1;
    }
    Some(q)
}

/// Requests served per container on one device during one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServicePlan {
    pub served: Vec<u64>,
}

impl ServicePlan {
    pub fn total(&self) -> u64 {
        self.served.iter().sum()
    }

    pub fn is_idle(&self) -> bool {
        self.served.iter().all(|&s| s == 0)
    }
}

pub fn schedule_service(device: &DeviceState, cfg: &PolicyConfig) -> ServicePlan {
    let queues: Vec<u64> = device.containers.iter().map(|c| c.queue).collect();
    let served = match cfg.kind {
        PolicyKind::Lyapunov => longest_queue_first(&queues, device.service_capacity),
        PolicyKind::Baseline => uniform_split(&queues, device.service_capacity),
    };
    ServicePlan { served }
}

/// Grants `capacity` units one at a time to the container with the largest
/// remaining queue, ties to the lowest index.
///
/// Computed in closed form: find the lowest water level `L` whose excess
/// `Σ max(q − L, 0)` fits in `capacity`, drain everything down to `L`, then
/// hand the `r` remaining units to the first `r` containers sitting at `L`.
pub fn longest_queue_first(queues: &[u64], capacity: u64) -> Vec<u64> {
    let total: u64 = queues.iter().sum();
    if capacity >= total {
        return queues.to_vec();
    }
    let excess = |level: u64| -> u64 { queues.iter().map(|&q| q.saturating_sub(level)).sum() };
    let (mut lo, mut hi) = (0u64, queues.iter().copied().max().unwrap_or(0));
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if excess(mid) <= capacity {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let level = lo;
    let mut served: Vec<u64> = queues.iter().map(|&q| q.saturating_sub(level)).collect();
    let mut remaining = capacity - excess(level);
    for (s, &q) in served.iter_mut().zip(queues) {
        if remaining == 0 {
            break;
        }
        if q >= level && level > 0 {
            *s += 1;
            remaining -= 1;
        }
    }
    served
}

/// Splits `capacity` evenly across all containers, caps each share at its
/// queue, then deals the leftovers round-robin from container 0.
pub fn uniform_split(queues: &[u64], capacity: u64) -> Vec<u64> {
    if queues.is_empty() {
        return Vec::new();
    }
    let share = capacity / queues.len() as u64;
    let mut served: Vec<u64> = queues.iter().map(|&q| q.min(share)).collect();
    let mut leftover = capacity - served.iter().sum::<u64>();
    loop {
        let active: Vec<usize> = (0..queues.len()).filter(|&i| served[i] < queues[i]).collect();
        if leftover == 0 || active.is_empty() {
            break;
        }
        let m = active.len() as u64;
        if leftover >= m {
            // Whole round-robin cycles, as many as every active queue can absorb.
            let room = active.iter().map(|&i| queues[i] - served[i]).min().unwrap_or(0);
            let cycles = (leftover / m).min(room);
            for &i in &active {
                served[i] += cycles;
            }
            leftover -= cycles * m;
        } else {
            for &i in active.iter().take(leftover as usize) {
                served[i] += 1;
            }
            leftover = 0;
        }
    }
    served
}

/// `count` requests for `service` placed on one container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub device: usize,
    pub container: usize,
    pub service: ServiceId,
    pub count: u64,
}

/// Requests pushed back to a device's pending backlog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deferral {
    pub device: usize,
    pub service: ServiceId,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DispatchPlan {
    pub assignments: Vec<Assignment>,
    pub deferred: Vec<Deferral>,
}

impl DispatchPlan {
    pub fn assigned_total(&self) -> u64 {
        self.assignments.iter().map(|a| a.count).sum()
    }

    pub fn deferred_total(&self) -> u64 {
        self.deferred.iter().map(|d| d.count).sum()
    }

    /// Assigned count per `(device, container)`.
    pub fn per_container(&self) -> BTreeMap<(usize, usize), u64> {
        let mut out = BTreeMap::new();
        for a in &self.assignments {
            *out.entry((a.device, a.container)).or_insert(0) += a.count;
        }
        out
    }
}

/// Per-device processing headroom the supervisor reads before dispatching:
/// per-slot service capacity minus the requests already queued on the device.
pub fn residual_view(devices: &[DeviceState]) -> Vec<f64> {
    devices
        .iter()
        .map(|d| d.service_capacity as f64 - d.total_queue() as f64)
        .collect()
}

#[derive(PartialEq)]
struct Candidate {
    key: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Max-heap on key; ties favour the lowest index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Routes `pending[s]` requests of every service `s` to hosting containers.
///
/// `Lyapunov` water-fills: each request goes to the hosting device with the
/// largest remaining residual (ties to the lowest index), whose residual then
/// drops by one; on that device it joins the hosting container with the
/// smallest projected drain time `(queue + planned) / cmax`. `Baseline` draws
/// the device, then the container, uniformly at random.
pub fn dispatch<R: Rng + ?Sized>(
    pending: &[u64],
    devices: &[DeviceState],
    residuals: &[f64],
    cfg: &PolicyConfig,
    rng: &mut R,
) -> Result<DispatchPlan, PolicyError> {
    if residuals.len() != devices.len() {
        return Err(PolicyError::ViewMismatch {
            expected: devices.len(),
            got: residuals.len(),
        });
    }
    let mut plan = DispatchPlan::default();
    let mut planned: Vec<Vec<u64>> = devices.iter().map(|d| vec![0; d.containers.len()]).collect();
    let mut residual = residuals.to_vec();

    for (s, &count) in pending.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let service = ServiceId(s as u32);
        // Hosting containers per device, in index order.
        let hosts: Vec<(usize, Vec<usize>)> = devices
            .iter()
            .enumerate()
            .filter_map(|(d, dev)| {
                let cs: Vec<usize> = dev
                    .containers
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.service == service)
                    .map(|(i, _)| i)
                    .collect();
                (!cs.is_empty()).then_some((d, cs))
            })
            .collect();
        if hosts.is_empty() {
            return Err(PolicyError::NoHost(service));
        }

        match cfg.kind {
            PolicyKind::Lyapunov => {
                let mut device_heap: BinaryHeap<Candidate> = hosts
                    .iter()
                    .enumerate()
                    .map(|(h, (d, _))| Candidate {
                        key: residual[*d],
                        index: h,
                    })
                    .collect();
                // Per host: heap over its containers keyed by negated drain time.
                let mut container_heaps: Vec<BinaryHeap<Candidate>> = hosts
                    .iter()
                    .map(|(d, cs)| {
                        cs.iter()
                            .map(|&c| Candidate {
                                key: -drain_time(&devices[*d], c, planned[*d][c] + 1),
                                index: c,
                            })
                            .collect()
                    })
                    .collect();
                for _ in 0..count {
                    let top = device_heap.pop().expect("hosts is non-empty");
                    let d = hosts[top.index].0;
                    let cheap = container_heaps[top.index].pop().expect("host has containers");
                    let c = cheap.index;
                    planned[d][c] += 1;
                    residual[d] -= 1.0;
                    container_heaps[top.index].push(Candidate {
                        key: -drain_time(&devices[d], c, planned[d][c] + 1),
                        index: c,
                    });
                    device_heap.push(Candidate {
                        key: residual[d],
                        index: top.index,
                    });
                }
            }
            PolicyKind::Baseline => {
                for _ in 0..count {
                    let (d, cs) = &hosts[rng.random_range(0..hosts.len())];
                    let c = cs[rng.random_range(0..cs.len())];
                    planned[*d][c] += 1;
                }
            }
        }
    }
    for (d, per_device) in planned.iter().enumerate() {
        for (c, &count) in per_device.iter().enumerate() {
            if count > 0 {
                plan.assignments.push(Assignment {
                    device: d,
                    container: c,
                    service: devices[d].containers[c].service,
                    count,
                });
            }
        }
    }
    Ok(plan)
}

fn drain_time(device: &DeviceState, container: usize, extra: u64) -> f64 {
    let c = &device.containers[container];
    (c.queue + extra) as f64 / f64::from(c.cmax.max(1))
}

/// Moves every assignment that would push its container's post-dispatch
/// delay above `d_max` into the target device's pending backlog.
/// Assignments are examined in plan order; since a container hosts one
/// service, the outcome per container does not depend on that order.
pub fn enforce_dmax(plan: &DispatchPlan, devices: &[DeviceState], cfg: &PolicyConfig) -> DispatchPlan {
    let mut out = DispatchPlan {
        assignments: Vec::with_capacity(plan.assignments.len()),
        deferred: plan.deferred.clone(),
    };
    let mut accepted: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut deferred: BTreeMap<(usize, ServiceId), u64> = BTreeMap::new();
    for a in &plan.assignments {
        let c = &devices[a.device].containers[a.container];
        let so_far = accepted.entry((a.device, a.container)).or_insert(0);
        let take = match max_queue_within(c.lambda, c.cmax, cfg.d_max, cfg.delay_model) {
            None => a.count,
            Some(limit) => {
                let room = limit - (c.queue + *so_far) as i128;
                (room.max(0) as u64).min(a.count)
            }
        };
        *so_far += take;
        if take > 0 {
            out.assignments.push(Assignment { count: take, ..*a });
        }
        if take < a.count {
            *deferred.entry((a.device, a.service)).or_insert(0) += a.count - take;
        }
    }
    out.deferred.extend(
        deferred
            .into_iter()
            .map(|((device, service), count)| Deferral { device, service, count }),
    );
    out
}
