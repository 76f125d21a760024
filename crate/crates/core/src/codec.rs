//! Advertising-data (AD) encoding of IP payloads and aux-chain fragmentation.
//!
//! An IP payload with its one-octet sequence number prepended is carried in a
//! run of `Service Data - 16 bit UUID` AD structures:
//!
//! ```text
//! +--------+------+-----------+------------------+
//! | len(1) | 0x16 | uuid (LE) | data (<= 252 B)  |   repeated
//! +--------+------+-----------+------------------+
//! ```
//!
//! `len` counts type, UUID and data. The first data octet of the stream is
//! the sequence number. Every segment but the last is filled to 252 bytes.

use alloc::vec::Vec;
use core::fmt;

/// AD type `Service Data - 16 bit UUID`.
pub const AD_TYPE_SERVICE_DATA_16: u8 = 0x16;
/// Data bytes carried per AD segment.
pub const SEGMENT_DATA: usize = 252;
/// Length, type and UUID octets in front of every segment's data.
pub const SEGMENT_OVERHEAD: usize = 4;
pub const DEFAULT_MTU: usize = 1280;
pub const DEFAULT_SERVICE_UUID: u16 = 0xfeed;
/// Default data capacity of one auxiliary frame (255-byte PDU minus 10 bytes
/// of extended header).
pub const DEFAULT_AUX_CAPACITY: usize = 245;
/// Extended-header bytes in front of the AD data of every aux PDU.
pub const AUX_HEADER: usize = 10;
pub const DEFAULT_MAX_CHAIN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecError {
    PayloadTooLarge { len: usize, mtu: usize },
    MalformedBlock { offset: usize },
    NoIpSegments,
    ChainOverflow { frames: usize, max_chain: usize },
    ReassemblyIncomplete { missing: usize },
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::PayloadTooLarge { len, mtu } => {
                write!(f, "IP payload of {len} bytes exceeds MTU {mtu}")
            }
            CodecError::MalformedBlock { offset } => {
                write!(f, "malformed AD structure at offset {offset}")
            }
            CodecError::NoIpSegments => f.write_str("no AD segment carries the IP service UUID"),
            CodecError::ChainOverflow { frames, max_chain } => {
                write!(f, "block needs {frames} aux frames, controller allows {max_chain}")
            }
            CodecError::ReassemblyIncomplete { missing } => {
                write!(f, "aux chain incomplete, frame {missing} missing")
            }
        }
    }
}

impl core::error::Error for CodecError {}

/// An encoded advertising-data block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdBlock {
    bytes: Vec<u8>,
    seq: u8,
    ip_len: usize,
}

impl AdBlock {
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn seq(&self) -> u8 {
        self.seq
    }

    pub fn ip_len(&self) -> usize {
        self.ip_len
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        segment_count(self.ip_len)
    }
}

/// Number of AD segments needed for an IP payload of `ip_len` bytes.
pub const fn segment_count(ip_len: usize) -> usize {
    (ip_len + 1).div_ceil(SEGMENT_DATA)
}

/// Encoded block size for an IP payload of `ip_len` bytes.
pub const fn block_len(ip_len: usize) -> usize {
    SEGMENT_OVERHEAD * segment_count(ip_len) + ip_len + 1
}

/// Encode `payload` with sequence number `seq`, enforcing the default MTU.
pub fn encode(payload: &[u8], seq: u8, service_uuid: u16) -> Result<AdBlock, CodecError> {
    encode_with_mtu(payload, seq, service_uuid, DEFAULT_MTU)
}

pub fn encode_with_mtu(
    payload: &[u8],
    seq: u8,
    service_uuid: u16,
    mtu: usize,
) -> Result<AdBlock, CodecError> {
    if payload.len() > mtu {
        return Err(CodecError::PayloadTooLarge { len: payload.len(), mtu });
    }
    let mut bytes = Vec::with_capacity(block_len(payload.len()));
    let uuid = service_uuid.to_le_bytes();
    let stream = core::iter::once(&seq).chain(payload.iter());
    let mut remaining = payload.len() + 1;
    let mut stream = stream.copied();
    while remaining > 0 {
        let chunk = remaining.min(SEGMENT_DATA);
        bytes.push((chunk + 3) as u8);
        bytes.push(AD_TYPE_SERVICE_DATA_16);
        bytes.extend_from_slice(&uuid);
        bytes.extend(stream.by_ref().take(chunk));
        remaining -= chunk;
    }
    Ok(AdBlock { bytes, seq, ip_len: payload.len() })
}

/// Decode a block back into `(seq, ip_payload)`.
///
/// AD structures of another type or UUID are skipped.
pub fn decode(block: &[u8], expected_uuid: u16) -> Result<(u8, Vec<u8>), CodecError> {
    let uuid = expected_uuid.to_le_bytes();
    let mut data = Vec::new();
    let mut matched = false;
    let mut pos = 0;
    while pos < block.len() {
        let len = block[pos] as usize;
        if len == 0 || pos + 1 + len > block.len() {
            return Err(CodecError::MalformedBlock { offset: pos });
        }
        let body = &block[pos + 1..pos + 1 + len];
        if body.len() >= 3 && body[0] == AD_TYPE_SERVICE_DATA_16 && body[1..3] == uuid {
            matched = true;
            data.extend_from_slice(&body[3..]);
        }
        pos += 1 + len;
    }
    if !matched {
        return Err(CodecError::NoIpSegments);
    }
    if data.is_empty() {
        // Matching segments without a sequence octet.
        return Err(CodecError::MalformedBlock { offset: 0 });
    }
    let seq = data.remove(0);
    Ok((seq, data))
}

/// Payload sizes of the aux frames carrying one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxPlan {
    frame_sizes: Vec<usize>,
}

impl AuxPlan {
    pub fn frame_sizes(&self) -> &[usize] {
        &self.frame_sizes
    }

    pub fn frame_count(&self) -> usize {
        self.frame_sizes.len()
    }

    pub fn total(&self) -> usize {
        self.frame_sizes.iter().sum()
    }

    /// Byte ranges of `block` carried by each frame.
    pub fn ranges(&self) -> impl Iterator<Item = core::ops::Range<usize>> + '_ {
        let mut start = 0;
        self.frame_sizes.iter().map(move |&n| {
            let r = start..start + n;
            start += n;
            r
        })
    }

    /// Slice `block` into the planned frame payloads.
    pub fn slices<'a>(&'a self, block: &'a [u8]) -> impl Iterator<Item = &'a [u8]> + 'a {
        self.ranges().map(move |r| &block[r])
    }
}

/// Split a block of `block_len` bytes over chained aux frames.
pub fn plan_aux(block_len: usize, aux_capacity: usize, max_chain: usize) -> Result<AuxPlan, CodecError> {
    assert!(aux_capacity >= 1, "aux capacity must be at least one byte");
    let frames = block_len.div_ceil(aux_capacity).max(1);
    if frames > max_chain {
        return Err(CodecError::ChainOverflow { frames, max_chain });
    }
    let mut frame_sizes = Vec::with_capacity(frames);
    let mut left = block_len;
    for _ in 0..frames {
        let n = left.min(aux_capacity);
        frame_sizes.push(n);
        left -= n;
    }
    Ok(AuxPlan { frame_sizes })
}

/// Concatenate the aux payloads of one advertising event, in chain order.
pub fn reassemble<T: AsRef<[u8]>>(frames: &[Option<T>]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        match f {
            Some(f) => out.extend_from_slice(f.as_ref()),
            None => return Err(CodecError::ReassemblyIncomplete { missing: i }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Independent splitter: builds the byte stream first, then cuts it.
    fn naive_segments(seq: u8, payload: &[u8]) -> Vec<Vec<u8>> {
        let mut stream = vec![seq];
        stream.extend_from_slice(payload);
        let mut out = Vec::new();
        let mut i = 0;
        while i < stream.len() {
            let end = (i + 252).min(stream.len());
            out.push(stream[i..end].to_vec());
            i = end;
        }
        out
    }

    fn payload(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i * 7 + 3) as u8).collect()
    }

    #[test]
    fn small_payload_layout() {
        let p = payload(100);
        let b = encode(&p, 7, 0xfeed).unwrap();
        assert_eq!(b.segment_count(), 1);
        assert_eq!(b.len(), 105);
        assert_eq!(&b.bytes()[..5], &[104, 0x16, 0xed, 0xfe, 7]);
        assert_eq!(&b.bytes()[5..], &p[..]);
    }

    #[test]
    fn empty_payload() {
        let b = encode(&[], 0, 0xfeed).unwrap();
        assert_eq!(b.segment_count(), 1);
        assert_eq!(b.bytes(), &[4, 0x16, 0xed, 0xfe, 0]);
    }

    #[test]
    fn mtu_payload() {
        let b = encode(&payload(1280), 1, 0xfeed).unwrap();
        assert_eq!(b.segment_count(), 6);
        assert_eq!(b.len(), 1305);
    }

    #[test]
    fn oversize_rejected() {
        assert_eq!(
            encode(&payload(1281), 1, 0xfeed),
            Err(CodecError::PayloadTooLarge { len: 1281, mtu: 1280 })
        );
    }

    #[test]
    fn segments_match_naive_splitter() {
        for len in 0..=1280 {
            let p = payload(len);
            let b = encode(&p, 9, 0xfeed).unwrap();
            let oracle = naive_segments(9, &p);
            assert_eq!(b.segment_count(), oracle.len(), "len {len}");
            let mut expected = Vec::new();
            for seg in &oracle {
                expected.push(seg.len() as u8 + 3);
                expected.extend_from_slice(&[0x16, 0xed, 0xfe]);
                expected.extend_from_slice(seg);
            }
            assert_eq!(b.bytes(), &expected[..], "len {len}");
        }
    }

    #[test]
    fn foreign_segment_is_skipped() {
        let p = payload(300);
        let b = encode(&p, 3, 0xfeed).unwrap();
        // Flags AD structure, then a service data entry for another UUID.
        let mut block = vec![2, 0x01, 0x06, 5, 0x16, 0x0d, 0x18, 0xaa, 0xbb];
        block.extend_from_slice(b.bytes());
        assert_eq!(decode(&block, 0xfeed), Ok((3, p)));
    }

    #[test]
    fn truncated_block_is_malformed() {
        let b = encode(&payload(300), 3, 0xfeed).unwrap();
        let cut = &b.bytes()[..b.len() - 1];
        assert!(matches!(decode(cut, 0xfeed), Err(CodecError::MalformedBlock { .. })));
        assert!(matches!(decode(&[0, 1, 2], 0xfeed), Err(CodecError::MalformedBlock { offset: 0 })));
    }

    #[test]
    fn wrong_uuid_has_no_ip() {
        let b = encode(&payload(10), 3, 0xfeed).unwrap();
        assert_eq!(decode(b.bytes(), 0xbeef), Err(CodecError::NoIpSegments));
        assert_eq!(decode(&[], 0xfeed), Err(CodecError::NoIpSegments));
    }

    #[test]
    fn aux_plan_examples() {
        let plan = plan_aux(1305, 245, 10).unwrap();
        assert_eq!(plan.frame_sizes(), &[245, 245, 245, 245, 245, 80]);
        assert_eq!(plan.total(), 1305);
        assert_eq!(plan_aux(105, 245, 10).unwrap().frame_sizes(), &[105]);
        assert_eq!(
            plan_aux(2600, 245, 10),
            Err(CodecError::ChainOverflow { frames: 11, max_chain: 10 })
        );
    }

    #[test]
    fn reassembly() {
        let b = encode(&payload(1280), 1, 0xfeed).unwrap();
        let plan = plan_aux(b.len(), 245, 10).unwrap();
        let mut frames: Vec<Option<&[u8]>> = plan.slices(b.bytes()).map(Some).collect();
        assert_eq!(reassemble(&frames).unwrap(), b.bytes());
        frames[3] = None;
        assert_eq!(reassemble(&frames), Err(CodecError::ReassemblyIncomplete { missing: 3 }));

        let single = encode(&payload(4), 1, 0xfeed).unwrap();
        assert_eq!(reassemble(&[Some(single.bytes())]).unwrap(), single.bytes());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn roundtrip(p in proptest::collection::vec(any::<u8>(), 0..=1280), seq: u8) {
                let b = encode(&p, seq, 0xfeed).unwrap();
                prop_assert_eq!(b.len(), block_len(p.len()));
                prop_assert_eq!(decode(b.bytes(), 0xfeed).unwrap(), (seq, p));
            }

            #[test]
            fn plan_then_reassemble(len in 1usize..=2450, cap in 1usize..=255) {
                let block: Vec<u8> = (0..len).map(|i| i as u8).collect();
                match plan_aux(len, cap, 10) {
                    Ok(plan) => {
                        prop_assert_eq!(plan.total(), len);
                        let sizes = plan.frame_sizes();
                        prop_assert!(sizes[..sizes.len() - 1].iter().all(|&s| s == cap));
                        let frames: Vec<Option<&[u8]>> = plan.slices(&block).map(Some).collect();
                        prop_assert_eq!(reassemble(&frames).unwrap(), block);
                    }
                    Err(CodecError::ChainOverflow { frames, .. }) => prop_assert!(frames > 10 && len > 10 * cap),
                    Err(e) => prop_assert!(false, "unexpected {e}"),
                }
            }
        }
    }
}
