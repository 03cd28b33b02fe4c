#![no_main]

use libfuzzer_sys::fuzz_target;
use perfsan::tracedb::TraceDb;
use perfsan::wirefmt::decode_stream;

fuzz_target!(|data: &[u8]| {
    if let Ok((header, cmds)) = decode_stream(data) {
        let db = TraceDb::build(&header, &cmds);
        let _ = db.dump();
    }
});
