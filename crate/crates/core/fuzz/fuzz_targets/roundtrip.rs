#![no_main]

use libfuzzer_sys::fuzz_target;
use perfsan::wirefmt::{decode_stream, encode_stream};

// Anything the decoder accepts must re-encode to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok((header, cmds)) = decode_stream(data) {
        let bytes = encode_stream(&header, &cmds).expect("decoded commands re-encode");
        assert_eq!(bytes, data);
    }
});
