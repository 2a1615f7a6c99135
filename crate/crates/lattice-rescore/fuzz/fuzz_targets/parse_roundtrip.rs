#![no_main]

use libfuzzer_sys::fuzz_target;

use lattice_rescore::lattice::{lattice_to_string, parse_lattice};

// Accepted inputs must serialize to a canonical form that reparses to
// the same bytes.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(lat) = parse_lattice(text) else { return };
    let canonical = lattice_to_string("fuzz", &lat);
    let again = parse_lattice(&canonical).expect("canonical text must parse");
    assert_eq!(canonical, lattice_to_string("fuzz", &again));
});
