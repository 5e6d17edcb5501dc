//! Resource documents: what a device tells the supervising entity about its
//! processing, memory, storage and networking resources.
//!
//! Documents are built from simulated devices ([`snapshot`]) or from the local
//! machine ([`probe::probe_host`]), exchanged as XML ([`xml`]) and kept by the
//! supervisor in a [`Registry`].

pub mod probe;
mod registry;
pub mod xml;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceState, ResourceDetail, ResourceKind};

pub use registry::Registry;
pub use xml::{parse_device_list, parse_fragment, parse_response, parse_xml, serialize_device_list, serialize_xml};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepresentError {
    #[error("malformed document at byte {offset}: {message}")]
    Syntax { offset: u64, message: String },
    #[error("document violates invariant: {0}")]
    Invariant(String),
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpuInfo {
    pub architecture: String,
    pub family: String,
    pub cores: u32,
    pub frequency_mhz: u32,
    pub usage_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryInfo {
    pub total_mb: u64,
    pub available_mb: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageInfo {
    /// Medium, e.g. `HDD` or `SSD`.
    pub kind: String,
    pub total_gb: u64,
    pub available_gb: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInfo {
    pub bandwidth_mbps: u64,
    pub usage_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDocument {
    pub device_id: String,
    pub cpu: CpuInfo,
    pub memory: MemoryInfo,
    pub storage: StorageInfo,
    pub network: NetworkInfo,
    /// Slot at which the snapshot was taken.
    pub timestamp_slot: u64,
}

/// One resource family of a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResourceFragment {
    Cpu(CpuInfo),
    Memory(MemoryInfo),
    Storage(StorageInfo),
    Network(NetworkInfo),
}

impl ResourceFragment {
    pub fn kind(&self) -> ResourceKind {
        match self {
            ResourceFragment::Cpu(_) => ResourceKind::Processing,
            ResourceFragment::Memory(_) => ResourceKind::Memory,
            ResourceFragment::Storage(_) => ResourceKind::Storage,
            ResourceFragment::Network(_) => ResourceKind::Networking,
        }
    }

    pub fn validate(&self) -> Result<(), RepresentError> {
        match self {
            ResourceFragment::Cpu(c) => c.validate(),
            ResourceFragment::Memory(m) => m.validate(),
            ResourceFragment::Storage(s) => s.validate(),
            ResourceFragment::Network(n) => n.validate(),
        }
    }
}

/// A registry answer: the whole document or one family of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QueryResponse {
    Document(ResourceDocument),
    Fragment(ResourceFragment),
}

impl QueryResponse {
    pub fn to_xml(&self) -> String {
        match self {
            QueryResponse::Document(d) => serialize_xml(d),
            QueryResponse::Fragment(f) => xml::serialize_fragment(f),
        }
    }
}

fn check_percent(what: &str, value: f64) -> Result<(), RepresentError> {
    if (0.0..=100.0).contains(&value) {
        Ok(())
    } else {
        Err(RepresentError::Invariant(format!("{what} usage {value} outside [0, 100]")))
    }
}

impl CpuInfo {
    fn validate(&self) -> Result<(), RepresentError> {
        if self.cores == 0 {
            return Err(RepresentError::Invariant("cpu cores must be >= 1".into()));
        }
        if self.frequency_mhz == 0 {
            return Err(RepresentError::Invariant("cpu frequency must be > 0".into()));
        }
        check_percent("cpu", self.usage_percent)
    }
}

impl MemoryInfo {
    fn validate(&self) -> Result<(), RepresentError> {
        if self.available_mb > self.total_mb {
            return Err(RepresentError::Invariant(format!(
                "available memory {} MB exceeds total {} MB",
                self.available_mb, self.total_mb
            )));
        }
        Ok(())
    }
}

impl StorageInfo {
    fn validate(&self) -> Result<(), RepresentError> {
        if self.available_gb > self.total_gb {
            return Err(RepresentError::Invariant(format!(
                "available storage {} GB exceeds total {} GB",
                self.available_gb, self.total_gb
            )));
        }
        Ok(())
    }
}

impl NetworkInfo {
    fn validate(&self) -> Result<(), RepresentError> {
        check_percent("network", self.usage_percent)
    }
}

impl ResourceDocument {
    pub fn validate(&self) -> Result<(), RepresentError> {
        if self.device_id.is_empty() {
            return Err(RepresentError::Invariant("device id is empty".into()));
        }
        self.cpu.validate()?;
        self.memory.validate()?;
        self.storage.validate()?;
        self.network.validate()
    }

    pub fn fragment(&self, kind: ResourceKind) -> ResourceFragment {
        match kind {
            ResourceKind::Processing => ResourceFragment::Cpu(self.cpu.clone()),
            ResourceKind::Memory => ResourceFragment::Memory(self.memory.clone()),
            ResourceKind::Storage => ResourceFragment::Storage(self.storage.clone()),
            ResourceKind::Networking => ResourceFragment::Network(self.network.clone()),
        }
    }
}

fn usage_percent(capacity: f64, residual: f64) -> f64 {
    if capacity <= 0.0 {
        return 0.0;
    }
    let used = (capacity - residual).max(0.0);
    (100.0 * used / capacity).clamp(0.0, 100.0)
}

/// Describes a simulated device: totals come from its descriptors, available
/// amounts and usage from its residual load.
pub fn snapshot(device: &DeviceState, slot: u64) -> ResourceDocument {
    let residual = device.residual();
    let whole = |v: f64| v.max(0.0).round() as u64;
    let (architecture, family, cores, frequency_mhz) = match device.processor() {
        Some(p) => (p.architecture.clone(), p.family.clone(), p.cores, p.frequency_mhz),
        None => ("unknown".to_string(), "generic".to_string(), 1, 1),
    };
    let medium = match device.descriptor(ResourceKind::Storage).map(|d| &d.detail) {
        Some(ResourceDetail::Storage { medium }) => medium.clone(),
        _ => "unknown".to_string(),
    };
    let total_mb = whole(device.capacity(ResourceKind::Memory));
    let total_gb = whole(device.capacity(ResourceKind::Storage));
    ResourceDocument {
        device_id: device.id.to_string(),
        cpu: CpuInfo {
            architecture,
            family,
            cores: cores.max(1),
            frequency_mhz: frequency_mhz.max(1),
            usage_percent: usage_percent(
                device.capacity(ResourceKind::Processing),
                residual[ResourceKind::Processing],
            ),
        },
        memory: MemoryInfo {
            total_mb,
            available_mb: whole(residual[ResourceKind::Memory]).min(total_mb),
        },
        storage: StorageInfo {
            kind: medium,
            total_gb,
            available_gb: whole(residual[ResourceKind::Storage]).min(total_gb),
        },
        network: NetworkInfo {
            bandwidth_mbps: whole(device.capacity(ResourceKind::Networking)),
            usage_percent: usage_percent(
                device.capacity(ResourceKind::Networking),
                residual[ResourceKind::Networking],
            ),
        },
        timestamp_slot: slot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_topology, ContainerAllocation, ContainerId, ContainerState, DeviceId, ProcessorDetail,
        ResourceDescriptor, ServiceId, TopologyConfig,
    };

    fn device(containers: Vec<ContainerAllocation>) -> DeviceState {
        let caps = [10.0, 16384.0, 512.0, 1000.0];
        DeviceState {
            id: DeviceId { fog: 1, device: 3 },
            resources: ResourceKind::ALL
                .into_iter()
                .map(|kind| ResourceDescriptor {
                    kind,
                    capacity: caps[kind.index()],
                    detail: match kind {
                        ResourceKind::Processing => ResourceDetail::Processing(ProcessorDetail {
                            architecture: "x86_64".into(),
                            family: "generic".into(),
                            cores: 8,
                            frequency_mhz: 2400,
                        }),
                        ResourceKind::Storage => ResourceDetail::Storage { medium: "SSD".into() },
                        _ => ResourceDetail::None,
                    },
                })
                .collect(),
            containers: containers
                .into_iter()
                .enumerate()
                .map(|(k, allocation)| ContainerState {
                    id: ContainerId {
                        fog: 1,
                        device: 3,
                        container: k as u32 + 1,
                    },
                    service: ServiceId(0),
                    allocation,
                    cmax: 5,
                    lambda: 0.0,
                    queue: 0,
                })
                .collect(),
            service_capacity: 10,
            pending: vec![0],
        }
    }

    #[test]
    fn memory_available_is_residual() {
        let d = device(vec![ContainerAllocation::none().with(ResourceKind::Memory, 8192.0)]);
        let doc = snapshot(&d, 4);
        assert_eq!(
            doc.memory,
            MemoryInfo {
                total_mb: 16384,
                available_mb: 8192
            }
        );
        assert_eq!(doc.timestamp_slot, 4);
        assert_eq!(doc.device_id, "fn1-d3");
    }

    #[test]
    fn idle_device_reports_everything_free() {
        let doc = snapshot(&device(vec![]), 0);
        assert_eq!(doc.cpu.usage_percent, 0.0);
        assert_eq!(doc.network.usage_percent, 0.0);
        assert_eq!(doc.memory.available_mb, doc.memory.total_mb);
        assert_eq!(doc.storage.available_gb, doc.storage.total_gb);
        assert_eq!((doc.cpu.cores, doc.cpu.frequency_mhz), (8, 2400));
        assert_eq!(doc.storage.kind, "SSD");
    }

    #[test]
    fn cpu_usage_from_processing_load() {
        let d = device(vec![
            ContainerAllocation::none().with(ResourceKind::Processing, 2.5),
            ContainerAllocation::none().with(ResourceKind::Processing, 3.5),
        ]);
        assert_eq!(snapshot(&d, 0).cpu.usage_percent, 60.0);
    }

    #[test]
    fn snapshots_of_built_topologies_validate() {
        let t = build_topology(&TopologyConfig::small(), 8).unwrap();
        for d in t.devices() {
            let doc = snapshot(d, 0);
            doc.validate().unwrap();
            assert!((0.0..=100.0).contains(&doc.cpu.usage_percent));
        }
    }

    #[test]
    fn validate_catches_semantic_errors() {
        let mut doc = snapshot(&device(vec![]), 0);
        doc.memory.available_mb = doc.memory.total_mb + 1;
        assert!(matches!(doc.validate(), Err(RepresentError::Invariant(_))));
        let mut doc = snapshot(&device(vec![]), 0);
        doc.network.usage_percent = 100.5;
        assert!(doc.validate().is_err());
        let mut doc = snapshot(&device(vec![]), 0);
        doc.cpu.cores = 0;
        assert!(doc.validate().is_err());
    }
}
