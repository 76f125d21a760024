//! TOML scenario files.
//!
//! Every key is optional; missing keys take the defaults below. Durations are
//! integer microseconds and carry a `_us` suffix.
//!
//! ```toml
//! mode = "adv"            # adv | conn
//! topology = "star"       # star | tree | line
//! nodes = 15
//! producers = 14
//! duration_us = 60000000
//! seed = 1
//! # addresses = ["c2:00:00:00:00:00", ...]   one per node
//!
//! [adv]
//! interval_us = 50000
//! jitter_us = 10000
//! retransmissions = 2
//! instances = 10
//! link_queue = 4
//! setup_delay_us = 1000
//! aux_capacity = 245
//! max_chain = 10
//! service_uuid = 65261    # 0xfeed
//! mtu = 1280
//! scan_rotation_us = 30000
//! radio_switch_us = 130
//! dedup_capacity = 32
//!
//! [conn]
//! interval_lo_us = 40000
//! interval_hi_us = 60000
//! event_budget = 8
//! buffer_cap = 8900
//!
//! [traffic]
//! interval_us = 1000000
//! put_payload = 100
//! ack_payload = 8
//! ack_timeout_us = 10000000
//! hop_overhead = 10
//!
//! [noise]
//! advertisers = 0
//! interval_us = 100000
//! payload = 37
//! ```

use ipbleadv_core::adv::AdvParams;
use ipbleadv_core::conn::ConnParams;
use ipbleadv_core::engine::{InvalidConfig, Mode, NoiseSpec, ScenarioConfig};
use ipbleadv_core::net::{Topology, TrafficSpec};
use ipbleadv_core::types::{BleAddress, Dur};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub mode: String,
    pub topology: String,
    pub nodes: usize,
    pub producers: usize,
    pub duration_us: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub addresses: Vec<String>,
    pub adv: AdvSection,
    pub conn: ConnSection,
    pub traffic: TrafficSection,
    pub noise: NoiseSection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvSection {
    pub interval_us: u64,
    pub jitter_us: u64,
    pub retransmissions: u8,
    pub instances: usize,
    pub link_queue: usize,
    pub setup_delay_us: u64,
    pub aux_capacity: usize,
    pub max_chain: usize,
    pub service_uuid: u16,
    pub mtu: usize,
    pub scan_rotation_us: u64,
    pub radio_switch_us: u64,
    pub dedup_capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnSection {
    pub interval_lo_us: u64,
    pub interval_hi_us: u64,
    pub event_budget: u8,
    pub buffer_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub interval_us: u64,
    pub put_payload: usize,
    pub ack_payload: usize,
    pub ack_timeout_us: u64,
    pub hop_overhead: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub advertisers: usize,
    pub interval_us: u64,
    pub payload: usize,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        ScenarioFile::from(&ScenarioConfig::default())
    }
}

impl Default for AdvSection {
    fn default() -> Self {
        ScenarioFile::default().adv
    }
}

impl Default for ConnSection {
    fn default() -> Self {
        ScenarioFile::default().conn
    }
}

impl Default for TrafficSection {
    fn default() -> Self {
        ScenarioFile::default().traffic
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        ScenarioFile::default().noise
    }
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        ScenarioFile {
            mode: c.mode.name().into(),
            topology: c.topology.name().into(),
            nodes: c.nodes,
            producers: c.producers,
            duration_us: c.duration.as_micros(),
            seed: c.seed,
            addresses: c.addresses.iter().map(|a| a.to_string()).collect(),
            adv: AdvSection {
                interval_us: c.adv.adv_interval.as_micros(),
                jitter_us: c.adv.adv_jitter.as_micros(),
                retransmissions: c.adv.retransmissions,
                instances: c.adv.instances,
                link_queue: c.adv.link_queue,
                setup_delay_us: c.adv.setup_delay.as_micros(),
                aux_capacity: c.adv.aux_capacity,
                max_chain: c.adv.max_chain,
                service_uuid: c.adv.service_uuid,
                mtu: c.adv.mtu,
                scan_rotation_us: c.adv.scan_rotation.as_micros(),
                radio_switch_us: c.adv.radio_switch.as_micros(),
                dedup_capacity: c.adv.dedup_capacity,
            },
            conn: ConnSection {
                interval_lo_us: c.conn.interval_lo.as_micros(),
                interval_hi_us: c.conn.interval_hi.as_micros(),
                event_budget: c.conn.event_budget,
                buffer_cap: c.conn.buffer_cap,
            },
            traffic: TrafficSection {
                interval_us: c.traffic.interval.as_micros(),
                put_payload: c.traffic.put_payload,
                ack_payload: c.traffic.ack_payload,
                ack_timeout_us: c.traffic.ack_timeout.as_micros(),
                hop_overhead: c.traffic.hop_overhead,
            },
            noise: NoiseSection {
                advertisers: c.noise.advertisers,
                interval_us: c.noise.interval.as_micros(),
                payload: c.noise.payload,
            },
        }
    }
}

/// Parse `aa:bb:cc:dd:ee:ff`.
pub fn parse_address(s: &str) -> Option<BleAddress> {
    let mut out = [0u8; 6];
    let mut parts = s.split(':');
    for b in &mut out {
        let p = parts.next()?;
        if p.len() != 2 {
            return None;
        }
        *b = u8::from_str_radix(p, 16).ok()?;
    }
    parts.next().is_none().then_some(BleAddress(out))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile, InvalidConfig> {
        toml::from_str(text).map_err(|e| InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Convert to a validated engine configuration.
    pub fn to_config(&self) -> Result<ScenarioConfig, InvalidConfig> {
        let mode = Mode::parse(&self.mode).ok_or_else(|| InvalidConfig(format!("unknown mode {:?}", self.mode)))?;
        let topology = Topology::parse(&self.topology)
            .ok_or_else(|| InvalidConfig(format!("unknown topology {:?}", self.topology)))?;
        let addresses = self
            .addresses
            .iter()
            .map(|s| parse_address(s).ok_or_else(|| InvalidConfig(format!("bad address {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let a = &self.adv;
        let cfg = ScenarioConfig {
            mode,
            topology,
            nodes: self.nodes,
            producers: self.producers,
            adv: AdvParams {
                adv_interval: Dur(a.interval_us),
                adv_jitter: Dur(a.jitter_us),
                retransmissions: a.retransmissions,
                instances: a.instances,
                link_queue: a.link_queue,
                setup_delay: Dur(a.setup_delay_us),
                aux_capacity: a.aux_capacity,
                max_chain: a.max_chain,
                service_uuid: a.service_uuid,
                mtu: a.mtu,
                scan_rotation: Dur(a.scan_rotation_us),
                radio_switch: Dur(a.radio_switch_us),
                dedup_capacity: a.dedup_capacity,
            },
            conn: ConnParams {
                interval_lo: Dur(self.conn.interval_lo_us),
                interval_hi: Dur(self.conn.interval_hi_us),
                event_budget: self.conn.event_budget,
                buffer_cap: self.conn.buffer_cap,
            },
            traffic: TrafficSpec {
                interval: Dur(self.traffic.interval_us),
                put_payload: self.traffic.put_payload,
                ack_payload: self.traffic.ack_payload,
                ack_timeout: Dur(self.traffic.ack_timeout_us),
                hop_overhead: self.traffic.hop_overhead,
            },
            noise: NoiseSpec {
                advertisers: self.noise.advertisers,
                interval: Dur(self.noise.interval_us),
                payload: self.noise.payload,
            },
            duration: Dur(self.duration_us),
            seed: self.seed,
            addresses,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
