//! The slotted engine.
//!
//! Every slot, each fog node runs four phases in a fixed order:
//!
//! 1. serve: every device drains its containers per [`schedule_service`];
//! 2. admit: each container's new arrivals are accepted or rejected against
//!    its post-service queue;
//! 3. dispatch: admitted requests plus the devices' pending backlog are routed
//!    by [`dispatch`], trimmed by [`enforce_dmax`]; deferred requests wait in
//!    the target device's backlog;
//! 4. record one [`MetricsRecord`].
//!
//! Arrivals land after service, so a container's queue evolves as
//! `max(q - served, 0) + assigned`.

use std::io;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::model::{build_topology, FogTopology, ModelError, TopologyConfig};
use crate::policy::{
    admit_with_alpha, delay, dispatch, enforce_dmax, residual_view, schedule_service, PolicyConfig, PolicyError,
    PolicyKind,
};
use crate::rng::{stream, Domain};
use crate::workload::{generate_slot, RequestBatch};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("batch is for slot {got}, state is at slot {expected}")]
    SlotMismatch { expected: u64, got: u64 },
    #[error("batch shape does not match the topology")]
    BatchShape,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invariant violated at slot {slot}: {message}")]
    Invariant { slot: u64, message: String },
    #[error("invalid config: {0}")]
    Config(String),
}

/// Cumulative counters since slot 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub arrivals: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub served: u64,
    pub assigned: u64,
    /// Requests left in a pending backlog at the end of a slot, summed over slots.
    pub deferred: u64,
}

/// One row of the metrics series: one fog node, one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub slot: u64,
    /// 1-based fog node label.
    pub fog_id: u32,
    pub arrivals: u64,
    pub admitted: u64,
    pub rejected: u64,
    /// Requests waiting in device backlogs after dispatch.
    pub pending_backlog: u64,
    pub served: u64,
    /// Mean container queue after dispatch.
    pub mean_container_queue: f64,
    /// Delay of the containers that received requests this slot, weighted by
    /// the number received; 0 when nothing was dispatched.
    pub mean_delay_slots: f64,
    /// Requests placed in containers this slot (the weight of `mean_delay_slots`).
    #[serde(skip)]
    pub assigned: u64,
}

impl MetricsRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.fog_id == 0 {
            return Err("fog_id must be >= 1".into());
        }
        if self.admitted + self.rejected != self.arrivals {
            return Err(format!(
                "admitted {} + rejected {} != arrivals {}",
                self.admitted, self.rejected, self.arrivals
            ));
        }
        for (name, v) in [
            ("mean_container_queue", self.mean_container_queue),
            ("mean_delay_slots", self.mean_delay_slots),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} = {v} is not a finite non-negative number"));
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str =
    "slot,fog_id,arrivals,admitted,rejected,pending_backlog,served,mean_container_queue,mean_delay_slots";

pub fn write_metrics_csv<W: io::Write>(records: &[MetricsRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: io::Read>(input: R) -> Result<Vec<MetricsRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// System-wide view of one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotTotals {
    pub slot: u64,
    pub arrivals: u64,
    pub admitted: u64,
    pub served: u64,
    pub assigned: u64,
    /// Container queues plus pending backlog, after dispatch.
    pub total_queue: u64,
    pub pending_backlog: u64,
    pub container_queue: u64,
    /// Request-weighted delay over all fog nodes; 0 when nothing was dispatched.
    pub mean_delay_slots: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub topology: FogTopology,
    pub slot: u64,
    pub totals: Counters,
}

impl SimState {
    pub fn new(topology: FogTopology) -> Self {
        SimState {
            topology,
            slot: 0,
            totals: Counters::default(),
        }
    }

    /// Advances one slot. Returns one record per fog node, in fog order.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        batch: &RequestBatch,
        cfg: &PolicyConfig,
        rng: &mut R,
    ) -> Result<Vec<MetricsRecord>, SimError> {
        if batch.slot != self.slot {
            return Err(SimError::SlotMismatch {
                expected: self.slot,
                got: batch.slot,
            });
        }
        let shape_ok = batch.counts.len() == self.topology.fog_nodes.len()
            && self.topology.fog_nodes.iter().zip(&batch.counts).all(|(fog, c)| {
                c.len() == fog.devices.len()
                    && fog.devices.iter().zip(c).all(|(d, cc)| cc.len() == d.containers.len())
            });
        if !shape_ok {
            return Err(SimError::BatchShape);
        }

        let slot = self.slot;
        let fail = |message: String| SimError::Invariant { slot, message };
        let mut records = Vec::with_capacity(self.topology.fog_nodes.len());

        for (f, fog) in self.topology.fog_nodes.iter_mut().enumerate() {
            // 1. serve
            let mut served = 0;
            for device in &mut fog.devices {
                let plan = schedule_service(device, cfg);
                if plan.served.len() != device.containers.len() {
                    return Err(fail(format!("{}: service plan has wrong length", device.id)));
                }
                if plan.total() > device.service_capacity {
                    return Err(fail(format!(
                        "{}: served {} above capacity {}",
                        device.id,
                        plan.total(),
                        device.service_capacity
                    )));
                }
                for (c, &s) in device.containers.iter_mut().zip(&plan.served) {
                    if s > c.queue {
                        return Err(fail(format!("{}: served {s} from a queue of {}", c.id, c.queue)));
                    }
                    c.queue -= s;
                }
                served += plan.total();
            }

            // 2. admit; the carried backlog joins the dispatch pool
            let mut pending = vec![0u64; fog.services as usize];
            let (mut arrivals, mut admitted, mut rejected, mut carried) = (0, 0, 0, 0);
            for (d, device) in fog.devices.iter_mut().enumerate() {
                for (s, u) in device.pending.iter_mut().enumerate() {
                    pending[s] += *u;
                    carried += *u;
                    *u = 0;
                }
                let alpha = if cfg.alpha_overrides.is_empty() {
                    cfg.alpha
                } else {
                    cfg.alpha_for(&device.id.to_string())
                };
                for (c, container) in device.containers.iter().enumerate() {
                    let a = batch.counts[f][d][c];
                    let adm = admit_with_alpha(container.queue, a, cfg, alpha);
                    if adm.admitted + adm.rejected != a {
                        return Err(fail(format!("{}: admission does not conserve arrivals", container.id)));
                    }
                    pending[container.service.0 as usize] += adm.admitted;
                    arrivals += a;
                    admitted += adm.admitted;
                    rejected += adm.rejected;
                }
            }

            // 3. dispatch
            let residuals = residual_view(&fog.devices);
            let plan = dispatch(&pending, &fog.devices, &residuals, cfg, rng)?;
            let plan = enforce_dmax(&plan, &fog.devices, cfg);
            let (assigned, deferred) = (plan.assigned_total(), plan.deferred_total());
            if assigned + deferred != admitted + carried {
                return Err(fail(format!(
                    "fn{}: assigned {assigned} + deferred {deferred} != admitted {admitted} + carried {carried}",
                    fog.id.0
                )));
            }
            for a in &plan.assignments {
                let container = &mut fog.devices[a.device].containers[a.container];
                if container.service != a.service {
                    return Err(fail(format!("{}: assigned a request of another service", container.id)));
                }
                container.queue += a.count;
            }
            for u in &plan.deferred {
                fog.devices[u.device].pending[u.service.0 as usize] += u.count;
            }

            // 4. record
            let mut weighted = 0.0;
            for a in &plan.assignments {
                let k = &fog.devices[a.device].containers[a.container];
                weighted += a.count as f64 * delay(k.lambda, k.cmax, k.queue, cfg.delay_model);
            }
            let containers = fog.container_count();
            let queued: u64 = fog.containers().map(|c| c.queue).sum();
            let pending_backlog: u64 = fog.devices.iter().map(|d| d.pending_backlog()).sum();
            records.push(MetricsRecord {
                slot,
                fog_id: fog.id.0,
                arrivals,
                admitted,
                rejected,
                pending_backlog,
                served,
                mean_container_queue: if containers == 0 {
                    0.0
                } else {
                    queued as f64 / containers as f64
                },
                mean_delay_slots: if assigned == 0 { 0.0 } else { weighted / assigned as f64 },
                assigned,
            });

            self.totals.arrivals += arrivals;
            self.totals.admitted += admitted;
            self.totals.rejected += rejected;
            self.totals.served += served;
            self.totals.assigned += assigned;
            self.totals.deferred += deferred;
        }

        self.slot += 1;
        Ok(records)
    }

    pub fn slot_totals(&self, records: &[MetricsRecord]) -> SlotTotals {
        let assigned: u64 = records.iter().map(|r| r.assigned).sum();
        let weighted: f64 = records.iter().map(|r| r.mean_delay_slots * r.assigned as f64).sum();
        let container_queue = self.topology.total_queue();
        let pending_backlog = self.topology.total_pending();
        SlotTotals {
            slot: records.first().map_or(self.slot, |r| r.slot),
            arrivals: records.iter().map(|r| r.arrivals).sum(),
            admitted: records.iter().map(|r| r.admitted).sum(),
            served: records.iter().map(|r| r.served).sum(),
            assigned,
            total_queue: container_queue + pending_backlog,
            pending_backlog,
            container_queue,
            mean_delay_slots: if assigned == 0 { 0.0 } else { weighted / assigned as f64 },
        }
    }
}

/// End-of-run aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: String,
    pub v: f64,
    pub seed: u64,
    pub slots: u64,
    pub arrivals: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub served: u64,
    pub deferred: u64,
    /// admitted / arrivals; 0 without arrivals.
    pub admitted_fraction: f64,
    /// Request-weighted delay over the whole run.
    pub mean_delay_slots: f64,
    /// 95th percentile of the per-slot delay, over slots that dispatched requests.
    pub p95_delay_slots: f64,
    /// Time average of the mean container queue.
    pub mean_container_queue: f64,
    /// Time average of container queues plus pending backlog.
    pub mean_total_queue: f64,
    pub final_total_queue: u64,
    /// Running average of per-slot delay times pending backlog.
    pub delay_backlog_objective: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One record per (slot, fog), slot-major.
    pub records: Vec<MetricsRecord>,
    pub slots: Vec<SlotTotals>,
    pub summary: Summary,
}

/// Nearest-rank percentile; `values` need not be sorted.
fn percentile(values: &mut [f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * values.len() as f64).ceil().max(1.0) as usize;
    values[rank - 1]
}

fn summarize(policy: &PolicyConfig, seed: u64, slots: &[SlotTotals], containers: usize, totals: Counters) -> Summary {
    let mean = |f: fn(&SlotTotals) -> f64| {
        if slots.is_empty() {
            0.0
        } else {
            slots.iter().map(f).sum::<f64>() / slots.len() as f64
        }
    };
    let assigned: u64 = slots.iter().map(|t| t.assigned).sum();
    let weighted: f64 = slots.iter().map(|t| t.mean_delay_slots * t.assigned as f64).sum();
    let mut busy: Vec<f64> = slots.iter().filter(|t| t.assigned > 0).map(|t| t.mean_delay_slots).collect();
    Summary {
        policy: policy.kind.name().to_string(),
        v: policy.v,
        seed,
        slots: slots.len() as u64,
        arrivals: totals.arrivals,
        admitted: totals.admitted,
        rejected: totals.rejected,
        served: totals.served,
        deferred: totals.deferred,
        admitted_fraction: if totals.arrivals == 0 {
            0.0
        } else {
            totals.admitted as f64 / totals.arrivals as f64
        },
        mean_delay_slots: if assigned == 0 { 0.0 } else { weighted / assigned as f64 },
        p95_delay_slots: percentile(&mut busy, 95.0),
        mean_container_queue: if containers == 0 {
            0.0
        } else {
            mean(|t| t.container_queue as f64) / containers as f64
        },
        mean_total_queue: mean(|t| t.total_queue as f64),
        final_total_queue: slots.last().map_or(0, |t| t.total_queue),
        delay_backlog_objective: mean(|t| t.mean_delay_slots * t.pending_backlog as f64),
    }
}

/// Builds the topology for `seed` and runs `slots` slots under `policy`.
///
/// Arrivals depend only on the topology, the seed and the slot, so two runs
/// with the same topology config and seed see the same arrivals whatever the
/// policy.
pub fn run(topology: &TopologyConfig, policy: &PolicyConfig, slots: u64, seed: u64) -> Result<RunOutput, SimError> {
    policy.validate()?;
    let topology = build_topology(topology, seed)?;
    run_on(topology, policy, slots, seed)
}

/// Runs an already built topology.
pub fn run_on(topology: FogTopology, policy: &PolicyConfig, slots: u64, seed: u64) -> Result<RunOutput, SimError> {
    let containers = topology.container_count();
    let mut state = SimState::new(topology);
    let mut rng: ChaCha8Rng = stream(seed, Domain::Dispatch, 0, 0);
    let capacity = usize::try_from(slots).unwrap_or(0).min(1 << 20);
    let mut records = Vec::with_capacity(capacity * state.topology.fog_nodes.len());
    let mut totals = Vec::with_capacity(capacity);
    for slot in 0..slots {
        let batch = generate_slot(&state.topology, slot, seed);
        let recs = state.step(&batch, policy, &mut rng)?;
        totals.push(state.slot_totals(&recs));
        records.extend(recs);
    }
    let c = state.totals;
    if c.admitted + c.rejected != c.arrivals {
        return Err(SimError::Invariant {
            slot: state.slot,
            message: "cumulative admitted + rejected != arrivals".into(),
        });
    }
    let summary = summarize(policy, seed, &totals, containers, state.totals);
    Ok(RunOutput {
        records,
        slots: totals,
        summary,
    })
}

/// Runs the configured policy for `seed`.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunOutput, SimError> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(SimError::Config(violations.join("; ")));
    }
    run(&config.topology, &config.policy(), config.run.slots, seed)
}

/// One replica of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub kind: PolicyKind,
    pub v: f64,
    pub seed: u64,
}

impl Arm {
    /// `metrics_<policy>_<V>_<seed>.csv`
    pub fn file_name(&self) -> String {
        format!("metrics_{}_{}_{}.csv", self.kind.name(), self.v, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelay {
    pub seed: u64,
    pub baseline: f64,
    pub lyapunov: f64,
    /// (baseline - lyapunov) / baseline; 0 when the baseline delay is 0.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VComparison {
    pub v: f64,
    pub baseline_mean_delay: f64,
    pub lyapunov_mean_delay: f64,
    /// Mean over seeds of the paired reduction.
    pub mean_reduction: f64,
    /// Seeds where Lyapunov had the strictly lower mean delay.
    pub lyapunov_wins: u64,
    pub baseline_mean_total_queue: f64,
    pub lyapunov_mean_total_queue: f64,
    /// Per-slot total queue averaged over seeds.
    pub baseline_queue_series: Vec<f64>,
    pub lyapunov_queue_series: Vec<f64>,
    pub paired: Vec<PairedDelay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub slots: u64,
    pub seeds: Vec<u64>,
    pub v_list: Vec<f64>,
    pub per_v: Vec<VComparison>,
    /// One entry per (policy, V, seed).
    pub arms: Vec<Summary>,
}

pub struct Comparison {
    pub report: ComparisonReport,
    /// Every arm with its output, in report order.
    pub runs: Vec<(Arm, RunOutput)>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn queue_series(runs: &[&RunOutput]) -> Vec<f64> {
    let len = runs.iter().map(|r| r.slots.len()).min().unwrap_or(0);
    (0..len)
        .map(|t| mean_of(runs.iter().map(|r| r.slots[t].total_queue as f64)))
        .collect()
}

/// Runs Baseline and Lyapunov for every `v` and seed. Both arms of a pair use
/// the same topology and arrivals. Replicas run in parallel.
pub fn compare(
    topology: &TopologyConfig,
    policy: &PolicyConfig,
    slots: u64,
    v_list: &[f64],
    seeds: &[u64],
) -> Result<Comparison, SimError> {
    if v_list.is_empty() || seeds.is_empty() {
        return Err(SimError::Config("compare needs at least one V and one seed".into()));
    }
    let mut arms = Vec::new();
    for &v in v_list {
        for kind in [PolicyKind::Baseline, PolicyKind::Lyapunov] {
            for &seed in seeds {
                arms.push(Arm { kind, v, seed });
            }
        }
    }
    let outputs: Vec<RunOutput> = arms
        .par_iter()
        .map(|arm| {
            let cfg = PolicyConfig {
                kind: arm.kind,
                v: arm.v,
                ..policy.clone()
            };
            run(topology, &cfg, slots, arm.seed)
        })
        .collect::<Result<_, _>>()?;
    let runs: Vec<(Arm, RunOutput)> = arms.into_iter().zip(outputs).collect();

    let per_v = v_list
        .iter()
        .map(|&v| {
            let pick = |kind: PolicyKind| -> Vec<&RunOutput> {
                seeds
                    .iter()
                    .map(|&seed| {
                        &runs
                            .iter()
                            .find(|(a, _)| a.kind == kind && a.v == v && a.seed == seed)
                            .expect("every arm was run")
                            .1
                    })
                    .collect()
            };
            let (base, lyap) = (pick(PolicyKind::Baseline), pick(PolicyKind::Lyapunov));
            let paired: Vec<PairedDelay> = seeds
                .iter()
                .zip(base.iter().zip(&lyap))
                .map(|(&seed, (b, l))| {
                    let (b, l) = (b.summary.mean_delay_slots, l.summary.mean_delay_slots);
                    PairedDelay {
                        seed,
                        baseline: b,
                        lyapunov: l,
                        reduction: if b > 0.0 { (b - l) / b } else { 0.0 },
                    }
                })
                .collect();
            VComparison {
                v,
                baseline_mean_delay: mean_of(base.iter().map(|r| r.summary.mean_delay_slots)),
                lyapunov_mean_delay: mean_of(lyap.iter().map(|r| r.summary.mean_delay_slots)),
                mean_reduction: mean_of(paired.iter().map(|p| p.reduction)),
                lyapunov_wins: paired.iter().filter(|p| p.lyapunov < p.baseline).count() as u64,
                baseline_mean_total_queue: mean_of(base.iter().map(|r| r.summary.mean_total_queue)),
                lyapunov_mean_total_queue: mean_of(lyap.iter().map(|r| r.summary.mean_total_queue)),
                baseline_queue_series: queue_series(&base),
                lyapunov_queue_series: queue_series(&lyap),
                paired,
            }
        })
        .collect();

    Ok(Comparison {
        report: ComparisonReport {
            slots,
            seeds: seeds.to_vec(),
            v_list: v_list.to_vec(),
            per_v,
            arms: runs.iter().map(|(_, r)| r.summary.clone()).collect(),
        },
        runs,
    })
}

/// Runs `compare` with the config's V list and seeds.
pub fn compare_experiment(config: &ExperimentConfig) -> Result<Comparison, SimError> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(SimError::Config(violations.join("; ")));
    }
    compare(
        &config.topology,
        &config.policy(),
        config.run.slots,
        &config.policy.v_list,
        &config.run.seeds,
    )
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    run: &'a [Summary],
}

/// `summary.txt`: one `[[run]]` table per summary.
pub fn summaries_to_text(summaries: &[Summary]) -> String {
    toml::to_string(&SummaryDocument { run: summaries }).expect("summaries serialize")
}

/// `comparison.txt`
pub fn report_to_text(report: &ComparisonReport) -> String {
    toml::to_string(report).expect("report serializes")
}

pub fn report_from_text(text: &str) -> Result<ComparisonReport, toml::de::Error> {
    toml::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ContainerAllocation, ContainerId, ContainerState, DeviceId, DeviceState, FogId, FogNode, ResourceDescriptor,
        ResourceDetail, ResourceKind, ServiceId, Span,
    };

    fn single(queue: u64, capacity: u64) -> FogTopology {
        FogTopology {
            fog_nodes: vec![FogNode {
                id: FogId(1),
                services: 1,
                devices: vec![DeviceState {
                    id: DeviceId { fog: 1, device: 1 },
                    resources: ResourceKind::ALL
                        .into_iter()
                        .map(|kind| ResourceDescriptor {
                            kind,
                            capacity: capacity as f64,
                            detail: ResourceDetail::None,
                        })
                        .collect(),
                    containers: vec![ContainerState {
                        id: ContainerId {
                            fog: 1,
                            device: 1,
                            container: 1,
                        },
                        service: ServiceId(0),
                        allocation: ContainerAllocation::none().with(ResourceKind::Processing, capacity as f64),
                        cmax: capacity as u32,
                        lambda: 0.0,
                        queue,
                    }],
                    service_capacity: capacity,
                    pending: vec![0],
                }],
            }],
        }
    }

    fn admit_all() -> PolicyConfig {
        PolicyConfig {
            v: 1e6,
            ..PolicyConfig::default()
        }
    }

    fn batch(slot: u64, n: u64) -> RequestBatch {
        RequestBatch {
            slot,
            counts: vec![vec![vec![n]]],
        }
    }

    #[test]
    fn serve_then_arrive() {
        let mut s = SimState::new(single(7, 10));
        let mut rng = stream(0, Domain::Dispatch, 0, 0);
        let recs = s.step(&batch(0, 2), &admit_all(), &mut rng).unwrap();
        assert_eq!(s.topology.fog_nodes[0].devices[0].containers[0].queue, 2);
        assert_eq!((recs[0].served, recs[0].admitted, recs[0].rejected), (7, 2, 0));

        let mut s = SimState::new(single(7, 3));
        s.step(&batch(0, 0), &admit_all(), &mut rng).unwrap();
        assert_eq!(s.topology.fog_nodes[0].devices[0].containers[0].queue, 4);
        assert_eq!(s.slot, 1);
    }

    #[test]
    fn idle_system_is_a_fixed_point() {
        let mut s = SimState::new(single(0, 10));
        let before = s.topology.clone();
        let mut rng = stream(0, Domain::Dispatch, 0, 0);
        let recs = s.step(&batch(0, 0), &admit_all(), &mut rng).unwrap();
        assert_eq!(s.topology, before);
        let r = &recs[0];
        assert_eq!(
            (r.arrivals, r.admitted, r.rejected, r.served, r.pending_backlog),
            (0, 0, 0, 0, 0)
        );
        assert_eq!((r.mean_container_queue, r.mean_delay_slots), (0.0, 0.0));
    }

    #[test]
    fn slot_mismatch_is_an_error() {
        let mut s = SimState::new(single(0, 10));
        let mut rng = stream(0, Domain::Dispatch, 0, 0);
        assert!(matches!(
            s.step(&batch(3, 0), &admit_all(), &mut rng),
            Err(SimError::SlotMismatch { expected: 0, got: 3 })
        ));
    }

    #[test]
    fn dmax_deferral_lands_in_pending() {
        let mut s = SimState::new(single(0, 2));
        let cfg = PolicyConfig {
            d_max: 2.0,
            ..admit_all()
        };
        let mut rng = stream(0, Domain::Dispatch, 0, 0);
        // delay = q / 2 <= 2 admits at most 4 into the queue
        let recs = s.step(&batch(0, 7), &cfg, &mut rng).unwrap();
        assert_eq!(s.topology.fog_nodes[0].devices[0].containers[0].queue, 4);
        assert_eq!(recs[0].pending_backlog, 3);
        // next slot: 2 served, the 3 carried requests fill back up to 4
        let recs = s.step(&batch(1, 0), &cfg, &mut rng).unwrap();
        assert_eq!(s.topology.fog_nodes[0].devices[0].containers[0].queue, 4);
        assert_eq!(recs[0].pending_backlog, 1);
        assert_eq!(s.totals.deferred, 4);
    }

    #[test]
    fn empty_run_has_zeroed_summary() {
        let out = run(&TopologyConfig::small(), &PolicyConfig::default(), 0, 1).unwrap();
        assert!(out.records.is_empty() && out.slots.is_empty());
        let s = out.summary;
        assert_eq!((s.slots, s.arrivals, s.final_total_queue), (0, 0, 0));
        assert_eq!((s.admitted_fraction, s.mean_delay_slots, s.mean_total_queue), (0.0, 0.0, 0.0));
    }

    #[test]
    fn runs_are_deterministic_and_records_validate() {
        let topo = TopologyConfig::small();
        let a = run(&topo, &PolicyConfig::default(), 50, 3).unwrap();
        let b = run(&topo, &PolicyConfig::default(), 50, 3).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_metrics_csv(&a.records, &mut ca).unwrap();
        write_metrics_csv(&b.records, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca.clone()).unwrap().starts_with(CSV_HEADER));
        let back = read_metrics_csv(&ca[..]).unwrap();
        assert_eq!(back.len(), 50);
        for r in &back {
            r.validate().unwrap();
        }
    }

    #[test]
    fn zero_rates_never_grow_the_queue() {
        let topo = TopologyConfig {
            arrival_rate: Span::new(0.0, 0.0),
            initial_queue: Span::new(0, 40),
            ..TopologyConfig::small()
        };
        let out = run(&topo, &PolicyConfig::default(), 30, 5).unwrap();
        for w in out.slots.windows(2) {
            assert!(w[1].total_queue <= w[0].total_queue);
        }
        assert_eq!(out.summary.final_total_queue, 0);
    }

    #[test]
    fn compare_pairs_arrivals_and_lists_every_arm() {
        let topo = TopologyConfig::small();
        let cmp = compare(&topo, &PolicyConfig::default(), 40, &[0.2, 0.9], &[1, 2]).unwrap();
        assert_eq!(cmp.report.arms.len(), 8);
        assert_eq!(cmp.report.per_v.len(), 2);
        for v in [0.2, 0.9] {
            for seed in [1, 2] {
                let arrivals = |kind| {
                    let (_, out) = cmp
                        .runs
                        .iter()
                        .find(|(a, _)| a.kind == kind && a.v == v && a.seed == seed)
                        .unwrap();
                    out.records.iter().map(|r| r.arrivals).collect::<Vec<_>>()
                };
                assert_eq!(arrivals(PolicyKind::Baseline), arrivals(PolicyKind::Lyapunov));
            }
        }
        let text = report_to_text(&cmp.report);
        assert_eq!(report_from_text(&text).unwrap(), cmp.report);
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&mut v, 95.0), 19.0);
        assert_eq!(percentile(&mut [3.0], 95.0), 3.0);
        assert_eq!(percentile(&mut [], 95.0), 0.0);
    }
}
