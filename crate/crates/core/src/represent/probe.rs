//! Best-effort description of the machine we are running on.
//!
//! CPU, memory and disks are read through `sysinfo`, which wraps the
//! per-OS facilities (`/proc` on Linux, WMI on Windows, sysctl on BSD/macOS).
//! Link speed comes from `/sys/class/net` where available. Anything that
//! cannot be read falls back to a default and is marked as not probed.

use std::time::{Duration, Instant};

use sysinfo::{DiskKind, Disks, Networks, System, MINIMUM_CPU_UPDATE_INTERVAL};

use super::{CpuInfo, MemoryInfo, NetworkInfo, ResourceDocument, StorageInfo};

pub const DEFAULT_ARCHITECTURE: &str = "unknown";
pub const DEFAULT_FAMILY: &str = "generic";
pub const DEFAULT_CORES: u32 = 1;
pub const DEFAULT_FREQUENCY_MHZ: u32 = 1000;
pub const DEFAULT_MEMORY_MB: u64 = 1024;
pub const DEFAULT_STORAGE_KIND: &str = "unknown";
pub const DEFAULT_BANDWIDTH_MBPS: u64 = 100;

/// Raw readings; `None` means the field could not be read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HostSample {
    pub host_name: Option<String>,
    pub architecture: Option<String>,
    pub family: Option<String>,
    pub cores: Option<u32>,
    pub frequency_mhz: Option<u32>,
    pub cpu_usage_percent: Option<f64>,
    pub memory_total_mb: Option<u64>,
    pub memory_available_mb: Option<u64>,
    pub storage_kind: Option<String>,
    pub storage_total_gb: Option<u64>,
    pub storage_available_gb: Option<u64>,
    pub bandwidth_mbps: Option<u64>,
    pub network_usage_percent: Option<f64>,
}

/// `true` for every field read from the host, `false` where a default was used.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProbeStatus {
    pub architecture: bool,
    pub family: bool,
    pub cores: bool,
    pub frequency_mhz: bool,
    pub cpu_usage: bool,
    pub memory_total: bool,
    pub memory_available: bool,
    pub storage_kind: bool,
    pub storage_total: bool,
    pub storage_available: bool,
    pub bandwidth: bool,
    pub network_usage: bool,
}

impl ProbeStatus {
    /// Names of fields that fell back to defaults.
    pub fn fallbacks(&self) -> Vec<&'static str> {
        [
            ("cpu.architecture", self.architecture),
            ("cpu.family", self.family),
            ("cpu.cores", self.cores),
            ("cpu.frequencyMHz", self.frequency_mhz),
            ("cpu.usagePercent", self.cpu_usage),
            ("memory.totalMB", self.memory_total),
            ("memory.availableMB", self.memory_available),
            ("storage.kind", self.storage_kind),
            ("storage.totalGB", self.storage_total),
            ("storage.availableGB", self.storage_available),
            ("network.bandwidthMbps", self.bandwidth),
            ("network.usagePercent", self.network_usage),
        ]
        .into_iter()
        .filter(|(_, probed)| !probed)
        .map(|(name, _)| name)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbedDocument {
    pub document: ResourceDocument,
    pub probed: ProbeStatus,
}

/// Fills a document from `sample`, substituting defaults for missing
/// readings. The result always satisfies the document invariants.
pub fn from_sample(sample: &HostSample) -> ProbedDocument {
    let mut probed = ProbeStatus::default();
    fn take<T>(flag: &mut bool, value: Option<T>, default: T) -> T {
        *flag = value.is_some();
        value.unwrap_or(default)
    }

    let cores = take(&mut probed.cores, sample.cores.filter(|&c| c > 0), DEFAULT_CORES);
    let frequency_mhz = take(
        &mut probed.frequency_mhz,
        sample.frequency_mhz.filter(|&f| f > 0),
        DEFAULT_FREQUENCY_MHZ,
    );
    let cpu_usage = take(
        &mut probed.cpu_usage,
        sample.cpu_usage_percent.filter(|u| u.is_finite()),
        0.0,
    );
    let total_mb = take(
        &mut probed.memory_total,
        sample.memory_total_mb.filter(|&m| m > 0),
        DEFAULT_MEMORY_MB,
    );
    let available_mb = take(&mut probed.memory_available, sample.memory_available_mb, total_mb);
    let total_gb = take(&mut probed.storage_total, sample.storage_total_gb, 0);
    let available_gb = take(&mut probed.storage_available, sample.storage_available_gb, total_gb);
    let bandwidth_mbps = take(
        &mut probed.bandwidth,
        sample.bandwidth_mbps.filter(|&b| b > 0),
        DEFAULT_BANDWIDTH_MBPS,
    );
    let network_usage = take(
        &mut probed.network_usage,
        sample.network_usage_percent.filter(|u| u.is_finite()),
        0.0,
    );

    let document = ResourceDocument {
        device_id: sample.host_name.clone().unwrap_or_else(|| "localhost".to_string()),
        cpu: CpuInfo {
            architecture: take(
                &mut probed.architecture,
                sample.architecture.clone().filter(|s| !s.is_empty()),
                DEFAULT_ARCHITECTURE.to_string(),
            ),
            family: take(
                &mut probed.family,
                sample.family.clone().filter(|s| !s.is_empty()),
                DEFAULT_FAMILY.to_string(),
            ),
            cores,
            frequency_mhz,
            usage_percent: cpu_usage.clamp(0.0, 100.0),
        },
        memory: MemoryInfo {
            total_mb,
            available_mb: available_mb.min(total_mb),
        },
        storage: StorageInfo {
            kind: take(
                &mut probed.storage_kind,
                sample.storage_kind.clone(),
                DEFAULT_STORAGE_KIND.to_string(),
            ),
            total_gb,
            available_gb: available_gb.min(total_gb),
        },
        network: NetworkInfo {
            bandwidth_mbps,
            usage_percent: network_usage.clamp(0.0, 100.0),
        },
        timestamp_slot: 0,
    };
    ProbedDocument { document, probed }
}

#[cfg(target_os = "linux")]
fn link_speed_mbps() -> Option<u64> {
    let entries = std::fs::read_dir("/sys/class/net").ok()?;
    entries
        .filter_map(Result::ok)
        .filter(|e| e.file_name() != "lo")
        .filter_map(|e| std::fs::read_to_string(e.path().join("speed")).ok())
        .filter_map(|s| s.trim().parse::<i64>().ok())
        .filter(|&s| s > 0)
        .max()
        .map(|s| s as u64)
}

#[cfg(not(target_os = "linux"))]
fn link_speed_mbps() -> Option<u64> {
    None
}

const MB: u64 = 1024 * 1024;
const GB: u64 = 1024 * 1024 * 1024;

/// Reads the local machine. Takes roughly [`MINIMUM_CPU_UPDATE_INTERVAL`]
/// because CPU and network usage need two samples.
pub fn sample_host() -> HostSample {
    let mut sys = System::new();
    let mut networks = Networks::new_with_refreshed_list();
    sys.refresh_cpu_all();
    let started = Instant::now();
    std::thread::sleep(MINIMUM_CPU_UPDATE_INTERVAL.max(Duration::from_millis(100)));
    sys.refresh_cpu_all();
    sys.refresh_memory();
    networks.refresh(true);
    let elapsed = started.elapsed().as_secs_f64();

    let cpus = sys.cpus();
    let family = cpus.first().and_then(|c| {
        let brand = c.brand().trim();
        let vendor = c.vendor_id().trim();
        if !brand.is_empty() {
            Some(brand.to_string())
        } else if !vendor.is_empty() {
            Some(vendor.to_string())
        } else {
            None
        }
    });
    let frequency_mhz = cpus
        .iter()
        .map(|c| c.frequency())
        .max()
        .filter(|&f| f > 0)
        .and_then(|f| u32::try_from(f).ok());
    let cores = std::thread::available_parallelism()
        .ok()
        .map(|n| n.get() as u32)
        .or_else(|| (!cpus.is_empty()).then_some(cpus.len() as u32));
    let cpu_usage = (!cpus.is_empty()).then(|| f64::from(sys.global_cpu_usage()));

    let memory_total = sys.total_memory();
    let (memory_total_mb, memory_available_mb) = if memory_total > 0 {
        (Some(memory_total / MB), Some(sys.available_memory() / MB))
    } else {
        (None, None)
    };

    let disks = Disks::new_with_refreshed_list();
    let disk = disks
        .list()
        .iter()
        .filter(|d| d.total_space() > 0)
        .max_by_key(|d| d.total_space());
    let storage_kind = disk.and_then(|d| match d.kind() {
        DiskKind::SSD => Some("SSD".to_string()),
        DiskKind::HDD => Some("HDD".to_string()),
        DiskKind::Unknown(_) => None,
    });

    let bandwidth_mbps = link_speed_mbps();
    let network_usage_percent = bandwidth_mbps.filter(|_| elapsed > 0.0).map(|bw| {
        let bytes: u64 = networks
            .iter()
            .filter(|(name, _)| name.as_str() != "lo")
            .map(|(_, data)| data.received() + data.transmitted())
            .sum();
        let bits_per_second = bytes as f64 * 8.0 / elapsed;
        (100.0 * bits_per_second / (bw as f64 * 1e6)).clamp(0.0, 100.0)
    });

    HostSample {
        host_name: System::host_name().filter(|h| !h.is_empty()),
        architecture: Some(System::cpu_arch()).filter(|a| !a.is_empty() && a != "unknown"),
        family,
        cores,
        frequency_mhz,
        cpu_usage_percent: cpu_usage,
        memory_total_mb,
        memory_available_mb,
        storage_kind,
        storage_total_gb: disk.map(|d| d.total_space() / GB),
        storage_available_gb: disk.map(|d| d.available_space() / GB),
        bandwidth_mbps,
        network_usage_percent,
    }
}

/// Probes the local machine; never fails.
pub fn probe_host() -> ProbedDocument {
    from_sample(&sample_host())
}
