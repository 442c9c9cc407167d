#![no_main]

use libfuzzer_sys::fuzz_target;
use nsf_stability::harness::Snapshot;

// Layout: two bytes of little-endian sidecar length, the JSON sidecar,
// then the raw field bytes.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let n = usize::from(u16::from_le_bytes([data[0], data[1]])).min(data.len() - 2);
    let (sidecar, bytes) = data[2..].split_at(n);
    let Ok(sidecar) = std::str::from_utf8(sidecar) else { return };
    if let Ok(snap) = Snapshot::decode(bytes, sidecar) {
        assert_eq!(snap.data.len(), snap.meta.len);
        let (b, j) = snap.encode();
        assert_eq!(b, bytes);
        assert!(Snapshot::decode(&b, &j).is_ok());
    }
});
