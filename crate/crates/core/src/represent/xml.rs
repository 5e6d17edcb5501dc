//! Canonical XML form of resource documents.
//!
//! ```text
//! <device id="fn1-d1" timestampSlot="0">
//!   <cpu architecture="x86_64" family="generic" cores="8" frequencyMHz="2400" usagePercent="0.0"/>
//!   <memory totalMB="16384" availableMB="8192"/>
//!   <storage kind="SSD" totalGB="512" availableGB="256"/>
//!   <network bandwidthMbps="1000" usagePercent="12.5"/>
//! </device>
//! ```
//!
//! The serializer writes everything on one line with attributes in the order
//! above, so equal documents always produce identical bytes. The parser
//! accepts any attribute order and whitespace between elements.

use std::fmt::Write as _;
use std::str::FromStr;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{CpuInfo, MemoryInfo, NetworkInfo, QueryResponse, RepresentError, ResourceDocument, ResourceFragment, StorageInfo};

// `{:?}` prints the shortest representation that parses back to the same f64
// and always keeps a fractional part (`0.0`, `60.0`).
fn real(v: f64) -> String {
    format!("{v:?}")
}

fn write_fragment(out: &mut String, fragment: &ResourceFragment) {
    // Writing to a String cannot fail.
    let _ = match fragment {
        ResourceFragment::Cpu(c) => write!(
            out,
            r#"<cpu architecture="{}" family="{}" cores="{}" frequencyMHz="{}" usagePercent="{}"/>"#,
            escape(c.architecture.as_str()),
            escape(c.family.as_str()),
            c.cores,
            c.frequency_mhz,
            real(c.usage_percent)
        ),
        ResourceFragment::Memory(m) => write!(
            out,
            r#"<memory totalMB="{}" availableMB="{}"/>"#,
            m.total_mb, m.available_mb
        ),
        ResourceFragment::Storage(s) => write!(
            out,
            r#"<storage kind="{}" totalGB="{}" availableGB="{}"/>"#,
            escape(s.kind.as_str()),
            s.total_gb,
            s.available_gb
        ),
        ResourceFragment::Network(n) => write!(
            out,
            r#"<network bandwidthMbps="{}" usagePercent="{}"/>"#,
            n.bandwidth_mbps,
            real(n.usage_percent)
        ),
    };
}

pub fn serialize_xml(doc: &ResourceDocument) -> String {
    let mut out = String::with_capacity(320);
    let _ = write!(
        out,
        r#"<device id="{}" timestampSlot="{}">"#,
        escape(doc.device_id.as_str()),
        doc.timestamp_slot
    );
    write_fragment(&mut out, &ResourceFragment::Cpu(doc.cpu.clone()));
    write_fragment(&mut out, &ResourceFragment::Memory(doc.memory.clone()));
    write_fragment(&mut out, &ResourceFragment::Storage(doc.storage.clone()));
    write_fragment(&mut out, &ResourceFragment::Network(doc.network.clone()));
    out.push_str("</device>");
    out
}

pub fn serialize_fragment(fragment: &ResourceFragment) -> String {
    let mut out = String::with_capacity(128);
    write_fragment(&mut out, fragment);
    out
}

pub fn serialize_device_list<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::from("<devices>");
    for id in ids {
        let _ = write!(out, r#"<device id="{}"/>"#, escape(id));
    }
    out.push_str("</devices>");
    out
}

struct Node {
    name: String,
    attrs: Vec<(String, String)>,
    offset: u64,
    children: Vec<Node>,
}

fn syntax(offset: u64, message: impl Into<String>) -> RepresentError {
    RepresentError::Syntax {
        offset,
        message: message.into(),
    }
}

fn node_from(start: &BytesStart<'_>, offset: u64) -> Result<Node, RepresentError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|_| syntax(offset, "element name is not UTF-8"))?
        .to_string();
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| syntax(offset, e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|_| syntax(offset, "attribute name is not UTF-8"))?
            .to_string();
        let value = attr
            .unescape_value()
            .map_err(|e| syntax(offset, e.to_string()))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Node {
        name,
        attrs,
        offset,
        children: Vec::new(),
    })
}

/// Reads a single-rooted element tree; text content is not allowed.
fn parse_tree(text: &str) -> Result<Node, RepresentError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Node> = Vec::new();
    let mut root: Option<Node> = None;
    loop {
        let offset = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| syntax(reader.error_position(), e.to_string()))?;
        let finished = match event {
            Event::Start(start) => {
                stack.push(node_from(&start, offset)?);
                None
            }
            Event::Empty(start) => Some(node_from(&start, offset)?),
            Event::End(_) => Some(stack.pop().ok_or_else(|| syntax(offset, "unbalanced closing tag"))?),
            Event::Text(t) => {
                if t.iter().all(u8::is_ascii_whitespace) {
                    None
                } else {
                    return Err(syntax(offset, "unexpected text content"));
                }
            }
            Event::CData(_) => return Err(syntax(offset, "unexpected CDATA")),
            Event::Eof => {
                if let Some(open) = stack.last() {
                    return Err(syntax(
                        text.len() as u64,
                        format!("unexpected end of document inside <{}>", open.name),
                    ));
                }
                return root.ok_or_else(|| syntax(0, "empty document"));
            }
            _ => None,
        };
        if let Some(node) = finished {
            match stack.last_mut() {
                Some(parent) => parent.children.push(node),
                None if root.is_none() => root = Some(node),
                None => return Err(syntax(node.offset, "more than one root element")),
            }
        }
    }
}

struct Attrs<'a> {
    node: &'a Node,
    used: Vec<bool>,
}

impl<'a> Attrs<'a> {
    fn new(node: &'a Node) -> Self {
        Attrs {
            node,
            used: vec![false; node.attrs.len()],
        }
    }

    fn text(&mut self, key: &str) -> Result<String, RepresentError> {
        let idx = self
            .node
            .attrs
            .iter()
            .position(|(k, _)| k == key)
            .ok_or_else(|| syntax(self.node.offset, format!("<{}> lacks attribute {key}", self.node.name)))?;
        self.used[idx] = true;
        Ok(self.node.attrs[idx].1.clone())
    }

    fn number<T: FromStr>(&mut self, key: &str) -> Result<T, RepresentError> {
        let raw = self.text(key)?;
        raw.trim().parse().map_err(|_| {
            syntax(
                self.node.offset,
                format!("<{}> attribute {key}={raw:?} is not a valid number", self.node.name),
            )
        })
    }

    fn finish(self) -> Result<(), RepresentError> {
        match self.used.iter().position(|u| !u) {
            Some(i) => Err(syntax(
                self.node.offset,
                format!("<{}> has unknown attribute {}", self.node.name, self.node.attrs[i].0),
            )),
            None => Ok(()),
        }
    }
}

fn leaf(node: &Node) -> Result<(), RepresentError> {
    match node.children.first() {
        Some(child) => Err(syntax(child.offset, format!("<{}> must be empty", node.name))),
        None => Ok(()),
    }
}

fn decode_fragment(node: &Node) -> Result<ResourceFragment, RepresentError> {
    leaf(node)?;
    let mut a = Attrs::new(node);
    let fragment = match node.name.as_str() {
        "cpu" => ResourceFragment::Cpu(CpuInfo {
            architecture: a.text("architecture")?,
            family: a.text("family")?,
            cores: a.number("cores")?,
            frequency_mhz: a.number("frequencyMHz")?,
            usage_percent: a.number("usagePercent")?,
        }),
        "memory" => ResourceFragment::Memory(MemoryInfo {
            total_mb: a.number("totalMB")?,
            available_mb: a.number("availableMB")?,
        }),
        "storage" => ResourceFragment::Storage(StorageInfo {
            kind: a.text("kind")?,
            total_gb: a.number("totalGB")?,
            available_gb: a.number("availableGB")?,
        }),
        "network" => ResourceFragment::Network(NetworkInfo {
            bandwidth_mbps: a.number("bandwidthMbps")?,
            usage_percent: a.number("usagePercent")?,
        }),
        other => return Err(syntax(node.offset, format!("unexpected element <{other}>"))),
    };
    a.finish()?;
    Ok(fragment)
}

fn decode_document(node: &Node) -> Result<ResourceDocument, RepresentError> {
    if node.name != "device" {
        return Err(syntax(node.offset, format!("expected <device>, found <{}>", node.name)));
    }
    let mut a = Attrs::new(node);
    let device_id = a.text("id")?;
    let timestamp_slot = a.number("timestampSlot")?;
    a.finish()?;

    let (mut cpu, mut memory, mut storage, mut network) = (None, None, None, None);
    for child in &node.children {
        let duplicate = match decode_fragment(child)? {
            ResourceFragment::Cpu(c) => cpu.replace(c).is_some(),
            ResourceFragment::Memory(m) => memory.replace(m).is_some(),
            ResourceFragment::Storage(s) => storage.replace(s).is_some(),
            ResourceFragment::Network(n) => network.replace(n).is_some(),
        };
        if duplicate {
            return Err(syntax(child.offset, format!("duplicate <{}>", child.name)));
        }
    }
    let missing = |name: &str| syntax(node.offset, format!("<device> lacks <{name}>"));
    Ok(ResourceDocument {
        device_id,
        cpu: cpu.ok_or_else(|| missing("cpu"))?,
        memory: memory.ok_or_else(|| missing("memory"))?,
        storage: storage.ok_or_else(|| missing("storage"))?,
        network: network.ok_or_else(|| missing("network"))?,
        timestamp_slot,
    })
}

/// Parses and validates a full device document.
pub fn parse_xml(text: &str) -> Result<ResourceDocument, RepresentError> {
    let doc = decode_document(&parse_tree(text)?)?;
    doc.validate()?;
    Ok(doc)
}

/// Parses and validates a single-family fragment such as `<cpu …/>`.
pub fn parse_fragment(text: &str) -> Result<ResourceFragment, RepresentError> {
    let fragment = decode_fragment(&parse_tree(text)?)?;
    fragment.validate()?;
    Ok(fragment)
}

/// Parses either a full document or a fragment, by root element.
pub fn parse_response(text: &str) -> Result<QueryResponse, RepresentError> {
    let root = parse_tree(text)?;
    if root.name == "device" {
        let doc = decode_document(&root)?;
        doc.validate()?;
        Ok(QueryResponse::Document(doc))
    } else {
        let fragment = decode_fragment(&root)?;
        fragment.validate()?;
        Ok(QueryResponse::Fragment(fragment))
    }
}

pub fn parse_device_list(text: &str) -> Result<Vec<String>, RepresentError> {
    let root = parse_tree(text)?;
    if root.name != "devices" {
        return Err(syntax(root.offset, format!("expected <devices>, found <{}>", root.name)));
    }
    root.children
        .iter()
        .map(|child| {
            if child.name != "device" {
                return Err(syntax(child.offset, format!("unexpected element <{}>", child.name)));
            }
            leaf(child)?;
            let mut a = Attrs::new(child);
            let id = a.text("id")?;
            a.finish()?;
            Ok(id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ResourceDocument {
        ResourceDocument {
            device_id: "fn1-d1".into(),
            cpu: CpuInfo {
                architecture: "x86_64".into(),
                family: "generic".into(),
                cores: 8,
                frequency_mhz: 2400,
                usage_percent: 0.0,
            },
            memory: MemoryInfo {
                total_mb: 16384,
                available_mb: 8192,
            },
            storage: StorageInfo {
                kind: "SSD".into(),
                total_gb: 512,
                available_gb: 256,
            },
            network: NetworkInfo {
                bandwidth_mbps: 1000,
                usage_percent: 12.5,
            },
            timestamp_slot: 0,
        }
    }

    const GOLDEN: &str = concat!(
        r#"<device id="fn1-d1" timestampSlot="0">"#,
        r#"<cpu architecture="x86_64" family="generic" cores="8" frequencyMHz="2400" usagePercent="0.0"/>"#,
        r#"<memory totalMB="16384" availableMB="8192"/>"#,
        r#"<storage kind="SSD" totalGB="512" availableGB="256"/>"#,
        r#"<network bandwidthMbps="1000" usagePercent="12.5"/>"#,
        r#"</device>"#
    );

    #[test]
    fn golden_serialization() {
        assert_eq!(serialize_xml(&sample()), GOLDEN);
        assert_eq!(parse_xml(GOLDEN).unwrap(), sample());
    }

    #[test]
    fn tolerates_reordering_and_whitespace() {
        let text = r#"
            <?xml version="1.0" encoding="UTF-8"?>
            <device timestampSlot="0" id="fn1-d1">
              <network usagePercent="12.5" bandwidthMbps="1000" />
              <memory availableMB="8192" totalMB="16384"></memory>
              <cpu usagePercent="0" cores="8" family="generic" frequencyMHz="2400" architecture="x86_64"/>
              <storage availableGB="256" kind="SSD" totalGB="512"/>
            </device>
        "#;
        assert_eq!(parse_xml(text).unwrap(), sample());
    }

    #[test]
    fn escapes_attribute_values() {
        let mut doc = sample();
        doc.device_id = r#"a<b>&"c""#.into();
        doc.cpu.family = "x'y".into();
        let text = serialize_xml(&doc);
        assert!(!text.contains("a<b"));
        assert_eq!(parse_xml(&text).unwrap(), doc);
    }

    #[test]
    fn semantic_errors_are_not_syntax_errors() {
        let text = GOLDEN.replace(r#"availableMB="8192""#, r#"availableMB="20000""#);
        assert!(matches!(parse_xml(&text), Err(RepresentError::Invariant(_))));
        let text = GOLDEN.replace(r#"usagePercent="12.5""#, r#"usagePercent="101.0""#);
        assert!(matches!(parse_xml(&text), Err(RepresentError::Invariant(_))));
    }

    #[test]
    fn truncated_input_reports_offset() {
        let cut = &GOLDEN[..GOLDEN.len() - 20];
        match parse_xml(cut) {
            Err(RepresentError::Syntax { offset, .. }) => {
                assert!(offset > 0 && offset <= cut.len() as u64, "{offset}")
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_xml(""), Err(RepresentError::Syntax { .. })));
        assert!(matches!(parse_xml("<device"), Err(RepresentError::Syntax { .. })));
    }

    #[test]
    fn schema_errors_are_syntax_errors() {
        for bad in [
            GOLDEN.replace(r#" cores="8""#, ""),
            GOLDEN.replace(r#"cores="8""#, r#"cores="eight""#),
            GOLDEN.replace(r#"cores="8""#, r#"cores="8" turbo="1""#),
            GOLDEN.replace("<memory", "<ram").replace("</memory", "</ram"),
            GOLDEN.replace(r#"<network bandwidthMbps="1000" usagePercent="12.5"/>"#, ""),
            GOLDEN.replace("</device>", "hello</device>"),
            format!("{GOLDEN}{GOLDEN}"),
        ] {
            assert!(matches!(parse_xml(&bad), Err(RepresentError::Syntax { .. })), "{bad}");
        }
    }

    #[test]
    fn fragments_and_lists() {
        let cpu = ResourceFragment::Cpu(sample().cpu);
        let text = serialize_fragment(&cpu);
        assert!(text.starts_with("<cpu "));
        assert_eq!(parse_fragment(&text).unwrap(), cpu);
        assert_eq!(parse_response(&text).unwrap(), QueryResponse::Fragment(cpu));
        assert_eq!(parse_response(GOLDEN).unwrap(), QueryResponse::Document(sample()));

        let list = serialize_device_list(["fn1-d1", "fn1-d2"]);
        assert_eq!(list, r#"<devices><device id="fn1-d1"/><device id="fn1-d2"/></devices>"#);
        assert_eq!(parse_device_list(&list).unwrap(), vec!["fn1-d1", "fn1-d2"]);
        assert_eq!(parse_device_list("<devices/>").unwrap(), Vec::<String>::new());
    }

    pub(crate) fn arb_document() -> impl Strategy<Value = ResourceDocument> {
        let text = "[ -~]{0,12}";
        (
            ("[a-z0-9-]{1,12}", text, text, 1u32..512, 1u32..6000, 0.0f64..=100.0),
            (0u64..1 << 40, 0u64..1 << 40, text, 0u64..1 << 30, 0u64..1 << 30),
            (any::<u64>(), 0.0f64..=100.0, any::<u64>()),
        )
            .prop_map(|((id, arch, fam, cores, freq, cu), (m1, m2, kind, s1, s2), (bw, nu, slot))| {
                ResourceDocument {
                    device_id: id,
                    cpu: CpuInfo {
                        architecture: arch,
                        family: fam,
                        cores,
                        frequency_mhz: freq,
                        usage_percent: cu,
                    },
                    memory: MemoryInfo {
                        total_mb: m1.max(m2),
                        available_mb: m1.min(m2),
                    },
                    storage: StorageInfo {
                        kind,
                        total_gb: s1.max(s2),
                        available_gb: s1.min(s2),
                    },
                    network: NetworkInfo {
                        bandwidth_mbps: bw,
                        usage_percent: nu,
                    },
                    timestamp_slot: slot,
                }
            })
    }

    proptest! {
        #[test]
        fn round_trip(doc in arb_document()) {
            let text = serialize_xml(&doc);
            prop_assert_eq!(&parse_xml(&text).unwrap(), &doc);
            prop_assert_eq!(serialize_xml(&doc.clone()), text);
        }
    }
}
