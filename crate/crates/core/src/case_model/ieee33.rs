//! IEEE 33-bus radial feeder (Baran & Wu, 12.66 kV).
//!
//! Two line-data variants circulate. The default carries branch 7-8 as
//! 1.7114 + j1.2351 ohm and gives a base-case loss of about 211.0 kW /
//! 143.0 kVAr. The original listing has 0.7114 + j0.2351 ohm there and gives
//! about 202.7 kW / 135.1 kVAr.

use super::{BranchRecord, BusRecord, CaseError, NetworkCase, SlackLimits};

const BASE_KV: f64 = 12.66;
const BASE_MVA: f64 = 10.0;

/// (from, to, R ohm, X ohm)
const LINES: [(usize, usize, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 1.7114, 1.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
];

const BARAN_WU_LINE_7_8: (f64, f64) = (0.7114, 0.2351);

/// (bus, kW, kVAr) for buses 2..=33.
const LOADS: [(usize, f64, f64); 32] = [
    (2, 100.0, 60.0),
    (3, 90.0, 40.0),
    (4, 120.0, 80.0),
    (5, 60.0, 30.0),
    (6, 60.0, 20.0),
    (7, 200.0, 100.0),
    (8, 200.0, 100.0),
    (9, 60.0, 20.0),
    (10, 60.0, 20.0),
    (11, 45.0, 30.0),
    (12, 60.0, 35.0),
    (13, 60.0, 35.0),
    (14, 120.0, 80.0),
    (15, 60.0, 10.0),
    (16, 60.0, 20.0),
    (17, 60.0, 20.0),
    (18, 90.0, 40.0),
    (19, 90.0, 40.0),
    (20, 90.0, 40.0),
    (21, 90.0, 40.0),
    (22, 90.0, 40.0),
    (23, 90.0, 50.0),
    (24, 420.0, 200.0),
    (25, 420.0, 200.0),
    (26, 60.0, 25.0),
    (27, 60.0, 25.0),
    (28, 60.0, 20.0),
    (29, 120.0, 70.0),
    (30, 200.0, 600.0),
    (31, 150.0, 70.0),
    (32, 210.0, 100.0),
    (33, 60.0, 40.0),
];

pub const BUILTIN_NAMES: [&str; 2] = ["ieee33", "ieee33bw"];

fn build(line_7_8: Option<(f64, f64)>) -> NetworkCase {
    let z_base = BASE_KV * BASE_KV / BASE_MVA;
    let mut buses = vec![BusRecord::slack(1, BASE_KV)];
    buses.extend(
        LOADS
            .iter()
            .map(|&(id, kw, kvar)| BusRecord::pq(id, kw / 1000.0, kvar / 1000.0, BASE_KV)),
    );
    let branches = LINES
        .iter()
        .map(|&(f, t, r, x)| {
            let (r, x) = match line_7_8 {
                Some(z) if (f, t) == (7, 8) => z,
                _ => (r, x),
            };
            // bus ids are contiguous from 1, so position = id - 1
            BranchRecord::new(f - 1, t - 1, r / z_base, x / z_base)
        })
        .collect();
    NetworkCase::new(BASE_MVA, buses, branches, SlackLimits::default())
        .expect("builtin feeder data is valid")
}

/// The default 33-bus feeder (211 kW base-case loss variant).
pub fn builtin_ieee33() -> NetworkCase {
    build(None)
}

/// The original Baran & Wu listing (202.7 kW base-case loss).
pub fn builtin_ieee33_baran_wu() -> NetworkCase {
    build(Some(BARAN_WU_LINE_7_8))
}

/// Looks up a builtin by name, with or without the `builtin:` prefix.
pub fn builtin_case(name: &str) -> Result<NetworkCase, CaseError> {
    match name.strip_prefix("builtin:").unwrap_or(name) {
        "ieee33" => Ok(builtin_ieee33()),
        "ieee33bw" => Ok(builtin_ieee33_baran_wu()),
        other => Err(CaseError::UnknownBuiltin(other.to_string())),
    }
}
