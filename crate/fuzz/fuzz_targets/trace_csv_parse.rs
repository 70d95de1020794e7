#![no_main]

use ehrelay::codec::trace::{read_trace, write_trace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_trace(data) {
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).expect("write to memory");
        assert_eq!(read_trace(buf.as_slice()).expect("own output parses"), rows);
    }
});
