//! Bit-exact header codec and the behavioral model of the switch parser.
//!
//! Layout (all multi-bit fields MSB-first, each section zero-padded to a
//! byte boundary):
//!
//! ```text
//! preamble   [version u8 = 0x01][5 x u16 big-endian section byte length]
//! up leaf    [multipath:1][bitmap: leaf full width]
//! up spine   [multipath:1][bitmap: spine full width]
//! core       [bitmap: one bit per pod]
//! down spine [rule]* where rule = [next:1][idcnt:2][ids: idcnt x id width][bitmap]
//! down leaf  same as down spine with leaf widths
//! ```
//!
//! A downstream chain ends at the rule with `next = 0`; `idcnt = 0` marks
//! the default rule, which carries no identifiers and must terminate the
//! chain. A section of length zero is absent. Field widths are not carried
//! in the packet: switches are configured with the logical topology at boot,
//! exactly like the parser of a programmable switch.
//!
//! The length-bearing preamble is an artifact extension so that popping a
//! consumed layer is a constant-time byte-range drop.

use crate::bitmap::PortBitmap;
use crate::encoding::{
    DownSection, ElmoHeader, EncodingConfig, Layer, SharedRule, UpstreamRule,
};
use crate::topology::LogicalTopology;
use std::fmt::Write as _;
use thiserror::Error;

pub const WIRE_VERSION: u8 = 0x01;
pub const PREAMBLE_LEN: usize = 1 + 2 * 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("empty header")]
    Empty,
    #[error("unsupported header version {0:#x}")]
    BadVersion(u8),
    #[error("header truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("malformed rule at byte {offset}: {reason}")]
    BadRule { offset: usize, reason: &'static str },
    #[error("section {0:?} is not present")]
    MissingSection(Layer),
    #[error("bitmap width {got} does not match the layer width {want}")]
    WidthMismatch { got: u8, want: u8 },
    #[error("switch id {id} does not fit in {bits} bits")]
    IdRange { id: u16, bits: u8 },
    #[error("section {layer:?} exceeds the encodable length")]
    SectionOverflow { layer: Layer },
}

// ---------------------------------------------------------------------------
// bit-level IO
// ---------------------------------------------------------------------------

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    fill: u8,
}

impl BitWriter {
    fn push_bit(&mut self, bit: bool) {
        if self.fill == 0 {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().unwrap();
            *last |= 0x80 >> self.fill;
        }
        self.fill = (self.fill + 1) % 8;
    }

    fn push_bits(&mut self, value: u64, width: u8) {
        for i in (0..width).rev() {
            self.push_bit(value & (1 << i) != 0);
        }
    }

    fn push_bitmap(&mut self, bm: &PortBitmap) {
        for p in 0..bm.width() {
            self.push_bit(bm.get(p));
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize, // bit position
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    fn byte_offset(&self) -> usize {
        self.pos / 8
    }

    fn remaining_bits(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    fn read_bit(&mut self) -> Result<bool, WireError> {
        let byte = self.pos / 8;
        if byte >= self.bytes.len() {
            return Err(WireError::Truncated { offset: byte });
        }
        let bit = self.bytes[byte] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    fn read_bits(&mut self, width: u8) -> Result<u64, WireError> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    fn read_bitmap(&mut self, width: u8) -> Result<PortBitmap, WireError> {
        let mut bm = PortBitmap::empty(width);
        for p in 0..width {
            if self.read_bit()? {
                bm.set(p);
            }
        }
        Ok(bm)
    }

    /// Skip `width` bits without interpreting them (rule skipping during the
    /// linear scan).
    fn skip(&mut self, width: usize) -> Result<(), WireError> {
        if self.remaining_bits() < width {
            return Err(WireError::Truncated { offset: self.bytes.len() });
        }
        self.pos += width;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// layer parameters
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct DownParams {
    id_bits: u8,
    bitmap_width: u8,
}

fn down_params(layer: Layer, lt: &LogicalTopology) -> DownParams {
    match layer {
        Layer::DownstreamSpine => {
            DownParams { id_bits: lt.spine_id_bits, bitmap_width: lt.spine_down_width }
        }
        Layer::DownstreamLeaf => {
            DownParams { id_bits: lt.leaf_id_bits, bitmap_width: lt.leaf_down_width }
        }
        _ => unreachable!("not a downstream layer"),
    }
}

fn upstream_width(layer: Layer, lt: &LogicalTopology) -> u8 {
    match layer {
        Layer::UpstreamLeaf => lt.leaf_full_width,
        Layer::UpstreamSpine => lt.spine_full_width,
        _ => unreachable!("not an upstream layer"),
    }
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

fn encode_upstream(rule: &UpstreamRule, layer: Layer, lt: &LogicalTopology) -> Result<Vec<u8>, WireError> {
    let want = upstream_width(layer, lt);
    if rule.bitmap.width() != want {
        return Err(WireError::WidthMismatch { got: rule.bitmap.width(), want });
    }
    let mut w = BitWriter::default();
    w.push_bit(rule.multipath);
    w.push_bitmap(&rule.bitmap);
    Ok(w.finish())
}

fn encode_down(section: &DownSection, layer: Layer, lt: &LogicalTopology) -> Result<Vec<u8>, WireError> {
    if section.is_empty() {
        return Ok(Vec::new());
    }
    let p = down_params(layer, lt);
    let mut w = BitWriter::default();
    let n = section.rules.len();
    for (i, rule) in section.rules.iter().enumerate() {
        if rule.bitmap.width() != p.bitmap_width {
            return Err(WireError::WidthMismatch { got: rule.bitmap.width(), want: p.bitmap_width });
        }
        if rule.switches.is_empty() || rule.switches.len() > 3 {
            return Err(WireError::BadRule { offset: 0, reason: "rule must carry 1..=3 ids" });
        }
        let next = i + 1 < n || section.default.is_some();
        w.push_bit(next);
        w.push_bits(rule.switches.len() as u64, 2);
        for &id in &rule.switches {
            if p.id_bits < 16 && id >= 1 << p.id_bits {
                return Err(WireError::IdRange { id, bits: p.id_bits });
            }
            w.push_bits(id as u64, p.id_bits);
        }
        w.push_bitmap(&rule.bitmap);
    }
    if let Some(d) = &section.default {
        if d.width() != p.bitmap_width {
            return Err(WireError::WidthMismatch { got: d.width(), want: p.bitmap_width });
        }
        w.push_bit(false); // default terminates the chain
        w.push_bits(0, 2); // idcnt 0 marks the default rule
        w.push_bitmap(d);
    }
    Ok(w.finish())
}

/// Serialize a header. Deterministic; each section byte-aligned.
pub fn encode_header(h: &ElmoHeader, lt: &LogicalTopology) -> Result<Vec<u8>, WireError> {
    let sections: [Vec<u8>; 5] = [
        match &h.up_leaf {
            Some(r) => encode_upstream(r, Layer::UpstreamLeaf, lt)?,
            None => Vec::new(),
        },
        match &h.up_spine {
            Some(r) => encode_upstream(r, Layer::UpstreamSpine, lt)?,
            None => Vec::new(),
        },
        match &h.core {
            Some(bm) => {
                if bm.width() != lt.core_width {
                    return Err(WireError::WidthMismatch { got: bm.width(), want: lt.core_width });
                }
                let mut w = BitWriter::default();
                w.push_bitmap(bm);
                w.finish()
            }
            None => Vec::new(),
        },
        encode_down(&h.down_spine, Layer::DownstreamSpine, lt)?,
        encode_down(&h.down_leaf, Layer::DownstreamLeaf, lt)?,
    ];
    let mut out = Vec::with_capacity(
        PREAMBLE_LEN + sections.iter().map(Vec::len).sum::<usize>(),
    );
    out.push(WIRE_VERSION);
    for (i, s) in sections.iter().enumerate() {
        let len = u16::try_from(s.len())
            .map_err(|_| WireError::SectionOverflow { layer: Layer::ALL[i] })?;
        out.extend_from_slice(&len.to_be_bytes());
    }
    for s in &sections {
        out.extend_from_slice(s);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// decode / parse
// ---------------------------------------------------------------------------

struct Preamble {
    lens: [usize; 5],
}

impl Preamble {
    fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.is_empty() {
            return Err(WireError::Empty);
        }
        if bytes.len() < PREAMBLE_LEN {
            return Err(WireError::Truncated { offset: bytes.len() });
        }
        if bytes[0] != WIRE_VERSION {
            return Err(WireError::BadVersion(bytes[0]));
        }
        let mut lens = [0usize; 5];
        for (i, l) in lens.iter_mut().enumerate() {
            *l = u16::from_be_bytes([bytes[1 + 2 * i], bytes[2 + 2 * i]]) as usize;
        }
        let total = PREAMBLE_LEN + lens.iter().sum::<usize>();
        if bytes.len() != total {
            return Err(WireError::Truncated { offset: bytes.len().min(total) });
        }
        Ok(Preamble { lens })
    }

    fn section_range(&self, layer: Layer) -> std::ops::Range<usize> {
        let idx = layer as usize;
        let start = PREAMBLE_LEN + self.lens[..idx].iter().sum::<usize>();
        start..start + self.lens[idx]
    }
}

fn decode_upstream(bytes: &[u8], layer: Layer, lt: &LogicalTopology) -> Result<UpstreamRule, WireError> {
    let mut r = BitReader::new(bytes);
    let multipath = r.read_bit()?;
    let bitmap = r.read_bitmap(upstream_width(layer, lt))?;
    Ok(UpstreamRule { multipath, bitmap })
}

fn decode_down(bytes: &[u8], layer: Layer, lt: &LogicalTopology) -> Result<DownSection, WireError> {
    if bytes.is_empty() {
        return Ok(DownSection::default());
    }
    let p = down_params(layer, lt);
    let mut r = BitReader::new(bytes);
    let mut section = DownSection::default();
    loop {
        let next = r.read_bit()?;
        let idcnt = r.read_bits(2)? as usize;
        if idcnt == 0 {
            if next {
                return Err(WireError::BadRule {
                    offset: r.byte_offset(),
                    reason: "default rule must terminate the chain",
                });
            }
            section.default = Some(r.read_bitmap(p.bitmap_width)?);
            break;
        }
        let mut switches = Vec::with_capacity(idcnt);
        for _ in 0..idcnt {
            switches.push(r.read_bits(p.id_bits)? as u16);
        }
        let bitmap = r.read_bitmap(p.bitmap_width)?;
        section.rules.push(SharedRule { switches, bitmap });
        if !next {
            break;
        }
    }
    if r.remaining_bits() >= 8 {
        return Err(WireError::BadRule {
            offset: r.byte_offset(),
            reason: "trailing bytes after chain end",
        });
    }
    Ok(section)
}

/// Full structural decode, the inverse of [`encode_header`].
pub fn decode_header(bytes: &[u8], lt: &LogicalTopology) -> Result<ElmoHeader, WireError> {
    let pre = Preamble::parse(bytes)?;
    let get = |layer: Layer| &bytes[pre.section_range(layer)];
    let up_leaf = match get(Layer::UpstreamLeaf) {
        [] => None,
        s => Some(decode_upstream(s, Layer::UpstreamLeaf, lt)?),
    };
    let up_spine = match get(Layer::UpstreamSpine) {
        [] => None,
        s => Some(decode_upstream(s, Layer::UpstreamSpine, lt)?),
    };
    let core = match get(Layer::Core) {
        [] => None,
        s => Some(BitReader::new(s).read_bitmap(lt.core_width)?),
    };
    Ok(ElmoHeader {
        up_leaf,
        up_spine,
        core,
        down_spine: decode_down(get(Layer::DownstreamSpine), Layer::DownstreamSpine, lt)?,
        down_leaf: decode_down(get(Layer::DownstreamLeaf), Layer::DownstreamLeaf, lt)?,
    })
}

/// Outcome of a switch's single-pass scan of its header section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchResult {
    /// A p-rule listing this switch; forward on these ports.
    Matched(PortBitmap),
    /// An upstream or core rule (positional, no identifier list).
    MatchedUpstream(UpstreamRule),
    /// No rule listed the switch but the layer has a default p-rule.
    Default(PortBitmap),
    /// Nothing for this switch in the header.
    NoRule,
}

/// Scan `layer`'s section once, stopping at the first rule whose id list
/// contains `switch_identity`, at the chain terminator, or at the default
/// rule. Upstream and core sections match positionally.
pub fn parse_for_switch(
    bytes: &[u8],
    switch_identity: u16,
    layer: Layer,
    lt: &LogicalTopology,
) -> Result<MatchResult, WireError> {
    let pre = Preamble::parse(bytes)?;
    let section = &bytes[pre.section_range(layer)];
    if section.is_empty() {
        return Ok(MatchResult::NoRule);
    }
    match layer {
        Layer::UpstreamLeaf | Layer::UpstreamSpine => {
            Ok(MatchResult::MatchedUpstream(decode_upstream(section, layer, lt)?))
        }
        Layer::Core => Ok(MatchResult::Matched(BitReader::new(section).read_bitmap(lt.core_width)?)),
        Layer::DownstreamSpine | Layer::DownstreamLeaf => {
            let p = down_params(layer, lt);
            let mut r = BitReader::new(section);
            loop {
                let next = r.read_bit()?;
                let idcnt = r.read_bits(2)? as usize;
                if idcnt == 0 {
                    if next {
                        return Err(WireError::BadRule {
                            offset: r.byte_offset(),
                            reason: "default rule must terminate the chain",
                        });
                    }
                    return Ok(MatchResult::Default(r.read_bitmap(p.bitmap_width)?));
                }
                let mut matched = false;
                for _ in 0..idcnt {
                    if r.read_bits(p.id_bits)? as u16 == switch_identity {
                        matched = true;
                    }
                }
                if matched {
                    return Ok(MatchResult::Matched(r.read_bitmap(p.bitmap_width)?));
                }
                r.skip(p.bitmap_width as usize)?;
                if !next {
                    return Ok(MatchResult::NoRule);
                }
            }
        }
    }
}

/// Drop `consumed` and every section before it on the path. Consuming the
/// downstream leaf section (delivery toward hosts) strips the whole header.
pub fn pop_layers(bytes: &[u8], consumed: Layer) -> Result<Vec<u8>, WireError> {
    let pre = Preamble::parse(bytes)?;
    let idx = consumed as usize;
    if pre.lens[idx] == 0 {
        return Err(WireError::MissingSection(consumed));
    }
    if consumed == Layer::DownstreamLeaf {
        return Ok(Vec::new());
    }
    let keep_from = pre.section_range(consumed).end;
    let mut out = Vec::with_capacity(PREAMBLE_LEN + bytes.len() - keep_from);
    out.push(WIRE_VERSION);
    for (i, &len) in pre.lens.iter().enumerate() {
        let len = if i <= idx { 0u16 } else { len as u16 };
        out.extend_from_slice(&len.to_be_bytes());
    }
    out.extend_from_slice(&bytes[keep_from..]);
    Ok(out)
}

/// Byte length of the header as it leaves a switch toward a next hop that
/// will read `next_layer` matching `identity`: the egress invalidates every
/// p-rule of that section other than the next hop's own (the single rule it
/// matches, or the default), so each copy carries just that rule plus the
/// sections after it. The simulator forwards untrimmed bytes (extra rules
/// never change a later decision) and uses this for link-byte accounting.
pub fn egress_header_len(
    bytes: &[u8],
    next_layer: Layer,
    identity: u16,
    lt: &LogicalTopology,
) -> Result<usize, WireError> {
    let pre = Preamble::parse(bytes)?;
    let idx = next_layer as usize;
    let tail: usize = pre.lens[idx + 1..].iter().sum();
    let own = match next_layer {
        Layer::UpstreamLeaf | Layer::UpstreamSpine | Layer::Core => pre.lens[idx],
        Layer::DownstreamSpine | Layer::DownstreamLeaf => {
            let section = &bytes[pre.section_range(next_layer)];
            if section.is_empty() {
                0
            } else {
                let p = down_params(next_layer, lt);
                let mut r = BitReader::new(section);
                let mut kept_bits = 0usize;
                loop {
                    let start = r.pos;
                    let next = r.read_bit()?;
                    let idcnt = r.read_bits(2)? as usize;
                    if idcnt == 0 {
                        // default rule: kept by any unmatched next hop
                        r.skip(p.bitmap_width as usize)?;
                        if kept_bits == 0 {
                            kept_bits = r.pos - start;
                        }
                        break;
                    }
                    let mut matched = false;
                    for _ in 0..idcnt {
                        if r.read_bits(p.id_bits)? as u16 == identity {
                            matched = true;
                        }
                    }
                    r.skip(p.bitmap_width as usize)?;
                    if matched {
                        kept_bits = r.pos - start;
                        break;
                    }
                    if !next {
                        break;
                    }
                }
                kept_bits.div_ceil(8)
            }
        }
    };
    Ok(PREAMBLE_LEN + own + tail)
}

/// Worst-case encoded size for a configuration: every rule slot filled with
/// the maximum id count, both defaults present, all sections present.
pub fn max_header_bytes(lt: &LogicalTopology, cfg: &EncodingConfig) -> u32 {
    let section = |bits: u32| bits.div_ceil(8);
    let down = |h: u16, k: u8, id_bits: u8, width: u8| {
        let rule = 3 + k as u32 * id_bits as u32 + width as u32;
        let default = 3 + width as u32;
        section(h as u32 * rule + default)
    };
    PREAMBLE_LEN as u32
        + section(1 + lt.leaf_full_width as u32)
        + section(1 + lt.spine_full_width as u32)
        + section(lt.core_width as u32)
        + down(cfg.h_max_spine, cfg.k_max_spine, lt.spine_id_bits, lt.spine_down_width)
        + down(cfg.h_max_leaf, cfg.k_max_leaf, lt.leaf_id_bits, lt.leaf_down_width)
}

/// Golden-test dump: lowercase hex, one line per layer section (preamble
/// first, `-` for absent sections).
pub fn hex_dump(bytes: &[u8]) -> Result<String, WireError> {
    let pre = Preamble::parse(bytes)?;
    let mut out = String::new();
    let hex = |s: &[u8]| s.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    });
    out.push_str("preamble ");
    out.push_str(&hex(&bytes[..PREAMBLE_LEN]));
    out.push('\n');
    for layer in Layer::ALL {
        let range = pre.section_range(layer);
        out.push_str(layer.name());
        out.push(' ');
        if range.is_empty() {
            out.push('-');
        } else {
            out.push_str(&hex(&bytes[range]));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Topology, TopologySpec};

    fn lt() -> LogicalTopology {
        *Topology::build(TopologySpec::example()).unwrap().logical()
    }

    fn bm(s: &str) -> PortBitmap {
        PortBitmap::parse(s).unwrap()
    }

    fn sample_header() -> ElmoHeader {
        ElmoHeader {
            up_leaf: Some(UpstreamRule { multipath: true, bitmap: bm("00010111-00") }),
            up_spine: Some(UpstreamRule { multipath: true, bitmap: bm("00-0000") }),
            core: Some(bm("0011")),
            down_spine: DownSection {
                rules: vec![SharedRule { switches: vec![2, 3], bitmap: bm("11") }],
                default: None,
            },
            down_leaf: DownSection {
                rules: vec![
                    SharedRule { switches: vec![5, 7], bitmap: bm("11011000") },
                    SharedRule { switches: vec![0, 6], bitmap: bm("00110111") },
                ],
                default: None,
            },
        }
    }

    #[test]
    fn round_trip_sample() {
        let lt = lt();
        let h = sample_header();
        let bytes = encode_header(&h, &lt).unwrap();
        assert_eq!(decode_header(&bytes, &lt).unwrap(), h);
    }

    #[test]
    fn known_bytes_for_tiny_header() {
        // one-leaf header: only the upstream leaf rule, multipath set,
        // bitmap 10000000-00 (port 0). Bits: 1 1000 0000 00 -> bytes
        // 0b11000000, 0b00000000 -> c0 00
        let lt = lt();
        let h = ElmoHeader {
            up_leaf: Some(UpstreamRule { multipath: true, bitmap: bm("10000000-00") }),
            up_spine: None,
            core: None,
            down_spine: DownSection::default(),
            down_leaf: DownSection::default(),
        };
        let bytes = encode_header(&h, &lt).unwrap();
        assert_eq!(
            bytes,
            vec![0x01, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0xc0, 0x00],
            "hand-computed layout"
        );
    }

    #[test]
    fn parse_matches_by_identity() {
        let lt = lt();
        let bytes = encode_header(&sample_header(), &lt).unwrap();
        // spine of pod 2 matches the shared rule; pod 1 has nothing
        match parse_for_switch(&bytes, 2, Layer::DownstreamSpine, &lt).unwrap() {
            MatchResult::Matched(b) => assert_eq!(b, bm("11")),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_for_switch(&bytes, 1, Layer::DownstreamSpine, &lt).unwrap(),
            MatchResult::NoRule
        );
        match parse_for_switch(&bytes, 6, Layer::DownstreamLeaf, &lt).unwrap() {
            MatchResult::Matched(b) => assert_eq!(b, bm("00110111")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_rule_round_trips_and_matches() {
        let lt = lt();
        let mut h = sample_header();
        h.down_leaf.default = Some(bm("11111111"));
        let bytes = encode_header(&h, &lt).unwrap();
        assert_eq!(decode_header(&bytes, &lt).unwrap(), h);
        match parse_for_switch(&bytes, 3, Layer::DownstreamLeaf, &lt).unwrap() {
            MatchResult::Default(b) => assert_eq!(b, bm("11111111")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pop_walks_the_path() {
        let lt = lt();
        let bytes = encode_header(&sample_header(), &lt).unwrap();
        let after_leaf = pop_layers(&bytes, Layer::UpstreamLeaf).unwrap();
        assert!(after_leaf.len() < bytes.len());
        let after_spine = pop_layers(&after_leaf, Layer::UpstreamSpine).unwrap();
        let after_core = pop_layers(&after_spine, Layer::Core).unwrap();
        assert!(after_core.len() < after_spine.len());
        // core gone: downstream spine is now the first non-empty section
        let h = decode_header(&after_core, &lt).unwrap();
        assert!(h.up_leaf.is_none() && h.up_spine.is_none() && h.core.is_none());
        assert_eq!(h.down_spine.rules.len(), 1);
        // delivery toward hosts strips everything
        let stripped = pop_layers(&after_core, Layer::DownstreamLeaf).unwrap();
        assert!(stripped.is_empty());
        // popping again is an error
        assert_eq!(pop_layers(&stripped, Layer::DownstreamLeaf), Err(WireError::Empty));
        assert_eq!(
            pop_layers(&after_core, Layer::Core),
            Err(WireError::MissingSection(Layer::Core))
        );
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let lt = lt();
        let bytes = encode_header(&sample_header(), &lt).unwrap();
        let cut = &bytes[..bytes.len() - 1];
        assert!(matches!(Preamble::parse(cut), Err(WireError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = 0x7f;
        assert_eq!(decode_header(&bad, &lt).unwrap_err(), WireError::BadVersion(0x7f));
    }

    #[test]
    fn id_out_of_range_rejected() {
        let lt = lt();
        let mut h = sample_header();
        h.down_spine.rules[0].switches = vec![9]; // pods are 2 bits
        assert!(matches!(
            encode_header(&h, &lt),
            Err(WireError::IdRange { id: 9, bits: 2 })
        ));
    }

    #[test]
    fn hex_dump_is_line_per_section() {
        let lt = lt();
        let bytes = encode_header(&sample_header(), &lt).unwrap();
        let dump = hex_dump(&bytes).unwrap();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("preamble 01"));
        assert!(lines[3].starts_with("core "));
        assert!(dump.chars().all(|c| !c.is_ascii_uppercase()));
    }
}
