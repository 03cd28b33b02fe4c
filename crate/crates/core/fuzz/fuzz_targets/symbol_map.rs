#![no_main]

use libfuzzer_sys::fuzz_target;
use perfsan::symbols::SymbolMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = SymbolMap::parse(text) {
            for r in map.ranges() {
                assert_eq!(map.lookup(r.start).map(|x| x.start), Some(r.start));
                assert!(map.lookup(r.end - 1).is_some());
            }
        }
    }
});
