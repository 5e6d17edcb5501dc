//! Fog topology: fog nodes own devices, devices own resource descriptors and
//! host containers. Also the static allocation and residual-load arithmetic.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Index, IndexMut};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, Domain};

/// Tolerance used when comparing summed allocations against a capacity.
const CAPACITY_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid topology config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("device {device}: {kind} allocations {allocated} exceed capacity {capacity}")]
    CapacityViolation {
        device: DeviceId,
        kind: ResourceKind,
        allocated: f64,
        capacity: f64,
    },
    #[error("device {device} has no {kind} descriptor")]
    MissingDescriptor { device: DeviceId, kind: ResourceKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceKind {
    Processing,
    Memory,
    Storage,
    Networking,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 4] = [
        ResourceKind::Processing,
        ResourceKind::Memory,
        ResourceKind::Storage,
        ResourceKind::Networking,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Element name used for this kind in resource documents and URIs.
    pub fn family(self) -> &'static str {
        match self {
            ResourceKind::Processing => "cpu",
            ResourceKind::Memory => "memory",
            ResourceKind::Storage => "storage",
            ResourceKind::Networking => "network",
        }
    }

    pub fn from_family(family: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.family() == family)
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ResourceKind::Processing => "Processing",
            ResourceKind::Memory => "Memory",
            ResourceKind::Storage => "Storage",
            ResourceKind::Networking => "Networking",
        };
        f.write_str(name)
    }
}

/// A value for each [`ResourceKind`], indexable by kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerKind<T>(pub [T; 4]);

impl<T> PerKind<T> {
    pub fn from_fn(mut f: impl FnMut(ResourceKind) -> T) -> Self {
        PerKind(ResourceKind::ALL.map(&mut f))
    }
}

impl<T: Copy> PerKind<T> {
    pub fn splat(value: T) -> Self {
        PerKind([value; 4])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ResourceKind, T)> + '_ {
        ResourceKind::ALL.into_iter().map(|k| (k, self.0[k.index()]))
    }
}

impl<T> Index<ResourceKind> for PerKind<T> {
    type Output = T;
    fn index(&self, kind: ResourceKind) -> &T {
        &self.0[kind.index()]
    }
}

impl<T> IndexMut<ResourceKind> for PerKind<T> {
    fn index_mut(&mut self, kind: ResourceKind) -> &mut T {
        &mut self.0[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessorDetail {
    pub architecture: String,
    pub family: String,
    pub cores: u32,
    pub frequency_mhz: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceDetail {
    None,
    Processing(ProcessorDetail),
    /// Storage medium, e.g. `HDD` or `SSD`.
    Storage { medium: String },
}

/// Capacity of one resource of a device.
///
/// Units: request-slots per slot for processing, MB for memory, GB for
/// storage and Mbps for networking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDescriptor {
    pub kind: ResourceKind,
    pub capacity: f64,
    pub detail: ResourceDetail,
}

/// Which resources a container holds (`flags`) and how much of each (`amounts`).
/// Amounts whose flag is unset never count toward any sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerAllocation {
    pub flags: PerKind<bool>,
    pub amounts: PerKind<f64>,
}

impl ContainerAllocation {
    pub fn none() -> Self {
        ContainerAllocation {
            flags: PerKind::splat(false),
            amounts: PerKind::splat(0.0),
        }
    }

    pub fn with(mut self, kind: ResourceKind, amount: f64) -> Self {
        self.flags[kind] = true;
        self.amounts[kind] = amount;
        self
    }

    /// Per-kind `flag · amount`.
    pub fn allocated(&self) -> PerKind<f64> {
        PerKind::from_fn(|k| if self.flags[k] { self.amounts[k] } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FogId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId {
    pub fog: u32,
    pub device: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContainerId {
    pub fog: u32,
    pub device: u32,
    pub container: u32,
}

impl ContainerId {
    pub fn device_id(self) -> DeviceId {
        DeviceId {
            fog: self.fog,
            device: self.device,
        }
    }
}

impl fmt::Display for FogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn{}", self.0)
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn{}-d{}", self.fog, self.device)
    }
}

impl fmt::Display for ContainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn{}-d{}-c{}", self.fog, self.device, self.container)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerState {
    pub id: ContainerId,
    /// The service instance this container runs.
    pub service: ServiceId,
    pub allocation: ContainerAllocation,
    /// Requests per slot the container is sized for.
    pub cmax: u32,
    /// Mean Poisson arrival rate, requests per slot.
    pub lambda: f64,
    /// Queued requests.
    pub queue: u64,
}

impl ContainerState {
    pub fn allocated(&self) -> PerKind<f64> {
        self.allocation.allocated()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub id: DeviceId,
    /// One descriptor per [`ResourceKind`].
    pub resources: Vec<ResourceDescriptor>,
    pub containers: Vec<ContainerState>,
    /// Requests the device can serve per slot, shared by its containers.
    pub service_capacity: u64,
    /// Requests accepted by the fog node but not yet placed in a container
    /// queue, indexed by service.
    pub pending: Vec<u64>,
}

impl DeviceState {
    pub fn descriptor(&self, kind: ResourceKind) -> Option<&ResourceDescriptor> {
        self.resources.iter().find(|r| r.kind == kind)
    }

    pub fn capacity(&self, kind: ResourceKind) -> f64 {
        self.descriptor(kind).map_or(0.0, |r| r.capacity)
    }

    pub fn processor(&self) -> Option<&ProcessorDetail> {
        match self.descriptor(ResourceKind::Processing).map(|r| &r.detail) {
            Some(ResourceDetail::Processing(p)) => Some(p),
            _ => None,
        }
    }

    /// Sum of container allocations per kind.
    pub fn allocated(&self) -> PerKind<f64> {
        let mut sum = PerKind::splat(0.0);
        for c in &self.containers {
            for (k, v) in c.allocated().iter() {
                sum[k] += v;
            }
        }
        sum
    }

    /// Residual headroom per kind: capacity minus the containers' allocations.
    pub fn load(&self) -> Result<PerKind<f64>, ModelError> {
        let allocated = self.allocated();
        let mut out = PerKind::splat(0.0);
        for kind in ResourceKind::ALL {
            let descriptor = self.descriptor(kind).ok_or(ModelError::MissingDescriptor {
                device: self.id,
                kind,
            })?;
            let residual = descriptor.capacity - allocated[kind];
            if residual < -CAPACITY_EPSILON * descriptor.capacity.max(1.0) {
                return Err(ModelError::CapacityViolation {
                    device: self.id,
                    kind,
                    allocated: allocated[kind],
                    capacity: descriptor.capacity,
                });
            }
            out[kind] = residual.max(0.0);
        }
        Ok(out)
    }

    /// Like [`DeviceState::load`] but clamps violations to zero headroom.
    pub fn residual(&self) -> PerKind<f64> {
        let allocated = self.allocated();
        PerKind::from_fn(|k| (self.capacity(k) - allocated[k]).max(0.0))
    }

    pub fn pending_backlog(&self) -> u64 {
        self.pending.iter().sum()
    }

    pub fn total_queue(&self) -> u64 {
        self.containers.iter().map(|c| c.queue).sum()
    }

    pub fn hosts(&self, service: ServiceId) -> bool {
        self.containers.iter().any(|c| c.service == service)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogNode {
    pub id: FogId,
    /// Number of distinct services offered by this fog node.
    pub services: u32,
    pub devices: Vec<DeviceState>,
}

impl FogNode {
    pub fn containers(&self) -> impl Iterator<Item = &ContainerState> {
        self.devices.iter().flat_map(|d| d.containers.iter())
    }

    pub fn container_count(&self) -> usize {
        self.devices.iter().map(|d| d.containers.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogTopology {
    pub fog_nodes: Vec<FogNode>,
}

impl FogTopology {
    pub fn devices(&self) -> impl Iterator<Item = &DeviceState> {
        self.fog_nodes.iter().flat_map(|f| f.devices.iter())
    }

    pub fn containers(&self) -> impl Iterator<Item = &ContainerState> {
        self.devices().flat_map(|d| d.containers.iter())
    }

    pub fn containers_mut(&mut self) -> impl Iterator<Item = &mut ContainerState> {
        self.fog_nodes
            .iter_mut()
            .flat_map(|f| f.devices.iter_mut())
            .flat_map(|d| d.containers.iter_mut())
    }

    pub fn device_count(&self) -> usize {
        self.fog_nodes.iter().map(|f| f.devices.len()).sum()
    }

    pub fn container_count(&self) -> usize {
        self.fog_nodes.iter().map(FogNode::container_count).sum()
    }

    pub fn total_queue(&self) -> u64 {
        self.containers().map(|c| c.queue).sum()
    }

    pub fn total_pending(&self) -> u64 {
        self.devices().map(DeviceState::pending_backlog).sum()
    }
}

/// Inclusive `[min, max]` range, written as a two-element array in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(T, T)", into = "(T, T)")]
pub struct Span<T: Copy> {
    pub min: T,
    pub max: T,
}

impl<T: Copy> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Span { min, max }
    }
}

impl<T: Copy> From<(T, T)> for Span<T> {
    fn from((min, max): (T, T)) -> Self {
        Span { min, max }
    }
}

impl<T: Copy> From<Span<T>> for (T, T) {
    fn from(s: Span<T>) -> Self {
        (s.min, s.max)
    }
}

impl Span<u64> {
    fn sample(&self, rng: &mut impl Rng) -> u64 {
        rng.random_range(self.min..=self.max)
    }
}

impl Span<f64> {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

fn default_services() -> u32 {
    4
}
fn default_memory_mb() -> Span<u64> {
    Span::new(2048, 16384)
}
fn default_storage_gb() -> Span<u64> {
    Span::new(32, 1024)
}
fn default_bandwidth_mbps() -> Span<u64> {
    Span::new(100, 10_000)
}
fn default_fill() -> Span<f64> {
    Span::new(0.3, 0.9)
}
fn default_initial_queue() -> Span<u64> {
    Span::new(0, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Number of fog nodes.
    pub fog_nodes: u32,
    /// Devices per fog node.
    pub devices: Span<u64>,
    /// Containers per device.
    pub containers: Span<u64>,
    /// Per-container processing capacity, requests per slot.
    pub capacity: Span<u64>,
    /// Per-container arrival rate, requests per slot.
    pub arrival_rate: Span<f64>,
    /// Distinct services per fog node; containers run them in rotation.
    #[serde(default = "default_services")]
    pub services: u32,
    #[serde(default = "default_memory_mb")]
    pub memory_mb: Span<u64>,
    #[serde(default = "default_storage_gb")]
    pub storage_gb: Span<u64>,
    #[serde(default = "default_bandwidth_mbps")]
    pub bandwidth_mbps: Span<u64>,
    /// Fraction of each non-processing resource handed out to containers.
    #[serde(default = "default_fill")]
    pub fill: Span<f64>,
    /// Container queue length at slot 0.
    #[serde(default = "default_initial_queue")]
    pub initial_queue: Span<u64>,
    /// Draw the device processing capacity, split it into container shares and
    /// round each share to obtain the container's per-slot capacity.
    #[serde(default)]
    pub derive_cmax_from_allocation: bool,
}

impl TopologyConfig {
    /// Small config used by examples and unit tests.
    pub fn small() -> Self {
        TopologyConfig {
            fog_nodes: 1,
            devices: Span::new(2, 2),
            containers: Span::new(3, 3),
            capacity: Span::new(5, 10),
            arrival_rate: Span::new(0.0, 5.0),
            services: 3,
            memory_mb: default_memory_mb(),
            storage_gb: default_storage_gb(),
            bandwidth_mbps: default_bandwidth_mbps(),
            fill: default_fill(),
            initial_queue: default_initial_queue(),
            derive_cmax_from_allocation: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> ModelError {
            ModelError::InvalidConfig {
                field,
                reason: reason.into(),
            }
        }
        fn int_span(field: &'static str, s: Span<u64>, allow_zero: bool) -> Result<(), ModelError> {
            if s.min > s.max {
                return Err(bad(field, format!("min {} > max {}", s.min, s.max)));
            }
            if !allow_zero && s.min == 0 {
                return Err(bad(field, "values must be positive"));
            }
            Ok(())
        }
        fn real_span(field: &'static str, s: Span<f64>) -> Result<(), ModelError> {
            if !(s.min.is_finite() && s.max.is_finite()) {
                return Err(bad(field, "bounds must be finite"));
            }
            if s.min < 0.0 {
                return Err(bad(field, "values must be non-negative"));
            }
            if s.min > s.max {
                return Err(bad(field, format!("min {} > max {}", s.min, s.max)));
            }
            Ok(())
        }

        if self.fog_nodes == 0 {
            return Err(bad("fog_nodes", "must be positive"));
        }
        int_span("devices", self.devices, false)?;
        int_span("containers", self.containers, false)?;
        int_span("capacity", self.capacity, false)?;
        real_span("arrival_rate", self.arrival_rate)?;
        if self.services == 0 {
            return Err(bad("services", "must be positive"));
        }
        if u64::from(self.services) > self.containers.min {
            return Err(bad(
                "services",
                format!(
                    "{} services cannot all be hosted on a device with {} containers",
                    self.services, self.containers.min
                ),
            ));
        }
        int_span("memory_mb", self.memory_mb, false)?;
        int_span("storage_gb", self.storage_gb, false)?;
        int_span("bandwidth_mbps", self.bandwidth_mbps, false)?;
        real_span("fill", self.fill)?;
        if self.fill.max > 1.0 {
            return Err(bad("fill", "fractions must not exceed 1"));
        }
        int_span("initial_queue", self.initial_queue, true)?;
        Ok(())
    }
}

const ARCHITECTURES: [(&str, &[&str]); 3] = [
    ("x86_64", &["generic", "xeon", "core-i7", "epyc"]),
    ("aarch64", &["cortex-a72", "neoverse-n1"]),
    ("armv7", &["cortex-a7"]),
];

/// Builds a topology from `config`; a pure function of `(config, seed)`.
pub fn build_topology(config: &TopologyConfig, seed: u64) -> Result<FogTopology, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Domain::Topology, 0));
    let fog_nodes = (1..=config.fog_nodes)
        .map(|fog| {
            let device_count = config.devices.sample(&mut rng);
            let mut ordinal = 0u32;
            let devices = (1..=device_count as u32)
                .map(|device| {
                    build_device(config, DeviceId { fog, device }, &mut ordinal, &mut rng)
                })
                .collect();
            FogNode {
                id: FogId(fog),
                services: config.services,
                devices,
            }
        })
        .collect();
    Ok(FogTopology { fog_nodes })
}

fn build_device(
    config: &TopologyConfig,
    id: DeviceId,
    ordinal: &mut u32,
    rng: &mut ChaCha8Rng,
) -> DeviceState {
    let q = config.containers.sample(rng) as usize;
    let drawn_cmax: Vec<u64> = (0..q).map(|_| config.capacity.sample(rng)).collect();
    let processing_capacity: u64 = drawn_cmax.iter().sum();

    let memory = config.memory_mb.sample(rng) as f64;
    let storage = config.storage_gb.sample(rng) as f64;
    let bandwidth = config.bandwidth_mbps.sample(rng) as f64;
    let capacities = PerKind([processing_capacity as f64, memory, storage, bandwidth]);

    let (arch, families) = *ARCHITECTURES.choose(rng).expect("non-empty");
    let processor = ProcessorDetail {
        architecture: arch.to_string(),
        family: families.choose(rng).expect("non-empty").to_string(),
        cores: rng.random_range(1..=16),
        frequency_mhz: rng.random_range(10..=36) * 100,
    };
    let medium = if rng.random_bool(0.5) { "SSD" } else { "HDD" };
    let resources = ResourceKind::ALL
        .into_iter()
        .map(|kind| ResourceDescriptor {
            kind,
            capacity: capacities[kind],
            detail: match kind {
                ResourceKind::Processing => ResourceDetail::Processing(processor.clone()),
                ResourceKind::Storage => ResourceDetail::Storage {
                    medium: medium.to_string(),
                },
                _ => ResourceDetail::None,
            },
        })
        .collect();

    // Non-processing shares: weights normalised so the total stays within
    // `fill` of capacity.
    let mut shares: PerKind<Vec<f64>> = PerKind::from_fn(|_| Vec::new());
    for kind in [ResourceKind::Memory, ResourceKind::Storage, ResourceKind::Networking] {
        let fill = config.fill.sample(rng);
        let weights: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        shares[kind] = weights
            .iter()
            .map(|w| capacities[kind] * fill * w / total)
            .collect();
    }
    let processing_shares: Vec<f64> = if config.derive_cmax_from_allocation {
        let weights: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        weights
            .iter()
            .map(|w| processing_capacity as f64 * w / total)
            .collect()
    } else {
        drawn_cmax.iter().map(|&c| c as f64).collect()
    };

    let containers: Vec<ContainerState> = (0..q)
        .map(|k| {
            let mut flags = PerKind::splat(true);
            for kind in [ResourceKind::Memory, ResourceKind::Storage, ResourceKind::Networking] {
                flags[kind] = rng.random_bool(0.75);
            }
            let amounts = PerKind([
                processing_shares[k],
                shares[ResourceKind::Memory][k],
                shares[ResourceKind::Storage][k],
                shares[ResourceKind::Networking][k],
            ]);
            let cmax = if config.derive_cmax_from_allocation {
                (processing_shares[k].round() as u32).max(1)
            } else {
                drawn_cmax[k] as u32
            };
            let service = ServiceId(*ordinal % config.services);
            *ordinal += 1;
            ContainerState {
                id: ContainerId {
                    fog: id.fog,
                    device: id.device,
                    container: k as u32 + 1,
                },
                service,
                allocation: ContainerAllocation { flags, amounts },
                cmax,
                lambda: config.arrival_rate.sample(rng),
                queue: config.initial_queue.sample(rng),
            }
        })
        .collect();

    let service_capacity = if config.derive_cmax_from_allocation {
        containers.iter().map(|c| u64::from(c.cmax)).sum()
    } else {
        processing_capacity
    };

    DeviceState {
        id,
        resources,
        containers,
        service_capacity,
        pending: vec![0; config.services as usize],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    DuplicateId,
    DanglingReference(String),
    Capacity {
        kind: ResourceKind,
        allocated: f64,
        capacity: f64,
    },
    Descriptor(String),
    Container(String),
    UnhostedService(ServiceId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Display id of the offending entity.
    pub entity: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::DuplicateId => write!(f, "{}: duplicate id", self.entity),
            ViolationKind::DanglingReference(what) => {
                write!(f, "{}: references missing {what}", self.entity)
            }
            ViolationKind::Capacity {
                kind,
                allocated,
                capacity,
            } => write!(
                f,
                "{}: {kind} allocations {allocated} exceed capacity {capacity}",
                self.entity
            ),
            ViolationKind::Descriptor(msg) => write!(f, "{}: {msg}", self.entity),
            ViolationKind::Container(msg) => write!(f, "{}: {msg}", self.entity),
            ViolationKind::UnhostedService(s) => {
                write!(f, "{}: service {} has no hosting container", self.entity, s.0)
            }
        }
    }
}

/// Lists every broken topology invariant; empty when the topology is sound.
pub fn validate_topology(topology: &FogTopology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, kind: ViolationKind| out.push(Violation { entity, kind });

    let mut fog_ids = HashSet::new();
    let mut device_ids = HashSet::new();
    let mut container_ids = HashSet::new();

    for fog in &topology.fog_nodes {
        if !fog_ids.insert(fog.id) {
            push(fog.id.to_string(), ViolationKind::DuplicateId);
        }
        for device in &fog.devices {
            let entity = device.id.to_string();
            if !device_ids.insert(device.id) {
                push(entity.clone(), ViolationKind::DuplicateId);
            }
            if device.id.fog != fog.id.0 {
                push(entity.clone(), ViolationKind::DanglingReference(fog.id.to_string()));
            }

            for kind in ResourceKind::ALL {
                let count = device.resources.iter().filter(|r| r.kind == kind).count();
                if count != 1 {
                    push(
                        entity.clone(),
                        ViolationKind::Descriptor(format!("{count} {kind} descriptors, expected 1")),
                    );
                }
            }
            for r in &device.resources {
                if !(r.capacity.is_finite() && r.capacity >= 0.0) {
                    push(
                        entity.clone(),
                        ViolationKind::Descriptor(format!("{} capacity {} is invalid", r.kind, r.capacity)),
                    );
                }
                if let ResourceDetail::Processing(p) = &r.detail {
                    if p.cores == 0 || p.frequency_mhz == 0 {
                        push(
                            entity.clone(),
                            ViolationKind::Descriptor("processor needs cores >= 1 and frequency > 0".into()),
                        );
                    }
                }
            }

            let allocated = device.allocated();
            for kind in ResourceKind::ALL {
                let capacity = device.capacity(kind);
                if allocated[kind] > capacity + CAPACITY_EPSILON * capacity.max(1.0) {
                    push(
                        entity.clone(),
                        ViolationKind::Capacity {
                            kind,
                            allocated: allocated[kind],
                            capacity,
                        },
                    );
                }
            }
            if device.pending.len() != fog.services as usize {
                push(
                    entity.clone(),
                    ViolationKind::Descriptor(format!(
                        "pending backlog tracks {} services, fog offers {}",
                        device.pending.len(),
                        fog.services
                    )),
                );
            }

            for c in &device.containers {
                let centity = c.id.to_string();
                if !container_ids.insert(c.id) {
                    push(centity.clone(), ViolationKind::DuplicateId);
                }
                if c.id.device_id() != device.id {
                    push(centity.clone(), ViolationKind::DanglingReference(device.id.to_string()));
                }
                if c.cmax == 0 {
                    push(centity.clone(), ViolationKind::Container("cmax must be >= 1".into()));
                }
                if !(c.lambda.is_finite() && c.lambda >= 0.0) {
                    push(
                        centity.clone(),
                        ViolationKind::Container(format!("arrival rate {} is invalid", c.lambda)),
                    );
                }
                if c.allocation.amounts.iter().any(|(_, a)| !(a >= 0.0 && a.is_finite())) {
                    push(centity.clone(), ViolationKind::Container("negative allocation".into()));
                }
                if c.service.0 >= fog.services {
                    push(
                        centity.clone(),
                        ViolationKind::DanglingReference(format!("service {}", c.service.0)),
                    );
                }
            }
        }
        for s in 0..fog.services {
            let service = ServiceId(s);
            if !fog.devices.iter().any(|d| d.hosts(service)) {
                push(fog.id.to_string(), ViolationKind::UnhostedService(service));
            }
        }
    }
    out
}
