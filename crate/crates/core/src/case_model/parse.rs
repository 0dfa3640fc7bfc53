//! Reader and writer for the MATPOWER case-file subset.
//!
//! Recognised statements are `baseMVA = <scalar>` and the matrices `bus`,
//! `branch`, `gen`, plus two extensions: `branch_limits` with rows
//! `fbus tbus pl_max_MW ql_max_MVar` (0 = unbounded) and `dg` with rows
//! `bus P_MW`. The `mpc.` prefix is optional, `%` starts a comment and any
//! other assignment is skipped.

use std::collections::HashMap;
use std::fmt;

use super::{
    topology::validate_radial, BranchRecord, BusKind, BusRecord, CaseError, NetworkCase,
    SlackLimits, DEFAULT_V_MAX, DEFAULT_V_MIN,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

type Row = (usize, Vec<f64>);

struct Matrix {
    rows: Vec<Row>,
}

#[derive(Default)]
struct RawCase {
    base_mva: Option<f64>,
    matrices: HashMap<String, Matrix>,
}

fn syntax(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64, CaseError> {
    match token {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => token
            .parse::<f64>()
            .map_err(|_| syntax(line, format!("invalid number `{token}`"))),
    }
}

/// Splits matrix body text into rows on `;`, appending non-empty ones.
fn push_rows(body: &str, line: usize, rows: &mut Vec<Row>) -> Result<(), CaseError> {
    for segment in body.split(';') {
        let values = segment
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if !values.is_empty() {
            rows.push((line, values));
        }
    }
    Ok(())
}

fn tokenize(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase::default();
    // (name, line where it opened, rows so far)
    let mut open: Option<(String, usize, Vec<Row>)> = None;

    for (idx, full_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full_line.split('%').next().unwrap_or("").trim();

        if let Some((name, start, mut rows)) = open.take() {
            match content.split_once(']') {
                Some((body, rest)) => {
                    push_rows(body, line, &mut rows)?;
                    let rest = rest.trim().trim_start_matches(';').trim();
                    if !rest.is_empty() {
                        return Err(syntax(line, format!("unexpected `{rest}` after matrix")));
                    }
                    insert_matrix(&mut raw, name, start, rows)?;
                }
                None => {
                    push_rows(content, line, &mut rows)?;
                    open = Some((name, start, rows));
                }
            }
            continue;
        }

        if content.is_empty() || content.starts_with("function") {
            continue;
        }
        let (lhs, rhs) = content
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected assignment, found `{content}`")))?;
        let name = lhs.trim();
        let name = name.strip_prefix("mpc.").unwrap_or(name).to_string();
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(syntax(line, format!("invalid name `{}`", lhs.trim())));
        }
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let mut rows = Vec::new();
            match body.split_once(']') {
                Some((body, rest)) => {
                    push_rows(body, line, &mut rows)?;
                    let rest = rest.trim().trim_start_matches(';').trim();
                    if !rest.is_empty() {
                        return Err(syntax(line, format!("unexpected `{rest}` after matrix")));
                    }
                    insert_matrix(&mut raw, name, line, rows)?;
                }
                None => {
                    push_rows(body, line, &mut rows)?;
                    open = Some((name, line, rows));
                }
            }
        } else if name == "baseMVA" {
            let value = rhs.trim_end_matches(';').trim();
            raw.base_mva = Some(parse_number(value, line)?);
        }
    }
    if let Some((name, start, _)) = open {
        return Err(syntax(start, format!("matrix `{name}` is never closed")));
    }
    Ok(raw)
}

fn insert_matrix(
    raw: &mut RawCase,
    name: String,
    line: usize,
    rows: Vec<Row>,
) -> Result<(), CaseError> {
    if raw.matrices.contains_key(&name) {
        return Err(syntax(line, format!("matrix `{name}` defined twice")));
    }
    raw.matrices.insert(name, Matrix { rows });
    Ok(())
}

fn check_width(matrix: &'static str, rows: &[Row], expected: usize) -> Result<(), CaseError> {
    for (line, row) in rows {
        if row.len() < expected {
            return Err(CaseError::ShortRow {
                line: *line,
                matrix,
                found: row.len(),
                expected,
            });
        }
    }
    Ok(())
}

fn as_id(value: f64, line: usize, what: &str) -> Result<usize, CaseError> {
    if value >= 1.0 && value.fract() == 0.0 && value < u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(syntax(line, format!("{what} `{value}` is not a positive integer")))
    }
}

/// Parses a case, logging any warnings through the `log` crate.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let (case, warnings) = parse_case_with_warnings(text)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(case)
}

pub fn parse_case_with_warnings(text: &str) -> Result<(NetworkCase, Vec<ParseWarning>), CaseError> {
    let raw = tokenize(text)?;
    let mut warnings = Vec::new();
    let mut warn = |line: usize, message: String| warnings.push(ParseWarning { line, message });

    let base_mva = raw.base_mva.ok_or(CaseError::MissingMatrix("baseMVA"))?;
    let bus_rows = &raw
        .matrices
        .get("bus")
        .ok_or(CaseError::MissingMatrix("bus"))?
        .rows;
    let branch_rows = &raw
        .matrices
        .get("branch")
        .ok_or(CaseError::MissingMatrix("branch"))?
        .rows;
    check_width("bus", bus_rows, 13)?;
    check_width("branch", branch_rows, 11)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut position = HashMap::new();
    let mut initial_vm = Vec::with_capacity(bus_rows.len());
    for (line, row) in bus_rows {
        let line = *line;
        let id = as_id(row[0], line, "bus id")?;
        if position.insert(id, buses.len()).is_some() {
            return Err(CaseError::DuplicateBus(id));
        }
        let kind = match row[1] {
            3.0 => BusKind::Slack,
            1.0 => BusKind::PQ,
            t => {
                return Err(CaseError::UnsupportedBusType {
                    bus: id,
                    kind: t as i64,
                })
            }
        };
        if row[4] != 0.0 || row[5] != 0.0 {
            warn(line, format!("bus {id}: shunt Gs/Bs ignored"));
        }
        if row[6] != 1.0 || row[10] != 1.0 {
            warn(line, format!("bus {id}: area/zone ignored"));
        }
        let (mut v_max, mut v_min) = (row[11], row[12]);
        if !(v_min < v_max) {
            warn(
                line,
                format!("bus {id}: degenerate voltage band [{v_min}, {v_max}], using defaults"),
            );
            v_min = DEFAULT_V_MIN;
            v_max = DEFAULT_V_MAX;
        }
        initial_vm.push(row[7]);
        buses.push(BusRecord {
            id,
            kind,
            p_load: row[2],
            q_load: row[3],
            p_gen: 0.0,
            v_min,
            v_max,
            base_kv: row[9],
            v_set: 1.0,
        });
    }

    let lookup = |id: usize, from: usize, to: usize| {
        position
            .get(&id)
            .copied()
            .ok_or(CaseError::UnknownBus { from, to, bus: id })
    };

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (line, row) in branch_rows {
        let line = *line;
        let f = as_id(row[0], line, "from bus")?;
        let t = as_id(row[1], line, "to bus")?;
        let mut br = BranchRecord::new(lookup(f, f, t)?, lookup(t, f, t)?, row[2], row[3]);
        br.b_shunt = row[4];
        if row[5] != 0.0 {
            br.i_max = Some(row[5] / base_mva);
        }
        if row[6] != 0.0 || row[7] != 0.0 {
            warn(line, format!("branch {f}-{t}: rateB/rateC ignored"));
        }
        if row[8] != 0.0 && row[8] != 1.0 {
            warn(line, format!("branch {f}-{t}: tap ratio {} ignored", row[8]));
        }
        if row[9] != 0.0 {
            warn(line, format!("branch {f}-{t}: phase shift ignored"));
        }
        br.in_service = row[10] != 0.0;
        branches.push(br);
    }

    if let Some(m) = raw.matrices.get("branch_limits") {
        check_width("branch_limits", &m.rows, 4)?;
        for (line, row) in &m.rows {
            let f = as_id(row[0], *line, "from bus")?;
            let t = as_id(row[1], *line, "to bus")?;
            let (pf, pt) = (lookup(f, f, t)?, lookup(t, f, t)?);
            let br = branches
                .iter_mut()
                .find(|b| (b.from, b.to) == (pf, pt) || (b.from, b.to) == (pt, pf))
                .ok_or_else(|| syntax(*line, format!("no branch {f}-{t} for limits")))?;
            br.pl_max = (row[2] != 0.0).then_some(row[2]);
            br.ql_max = (row[3] != 0.0).then_some(row[3]);
        }
    }

    if let Some(m) = raw.matrices.get("dg") {
        check_width("dg", &m.rows, 2)?;
        for (line, row) in &m.rows {
            let id = as_id(row[0], *line, "dg bus")?;
            let k = lookup(id, id, id)?;
            buses[k].p_gen += row[1];
        }
    }

    let slack_pos = buses.iter().position(|b| b.kind == BusKind::Slack);
    let mut slack_limits = SlackLimits::default();
    if let Some(s) = slack_pos {
        buses[s].v_set = if initial_vm[s] > 0.0 { initial_vm[s] } else { 1.0 };
    }
    if let Some(m) = raw.matrices.get("gen") {
        check_width("gen", &m.rows, 10)?;
        let mut found = false;
        for (line, row) in &m.rows {
            let id = as_id(row[0], *line, "gen bus")?;
            let at = lookup(id, id, id)?;
            if Some(at) != slack_pos {
                warn(*line, format!("generator at non-slack bus {id} ignored"));
                continue;
            }
            if found {
                warn(*line, format!("additional slack generator at bus {id} ignored"));
                continue;
            }
            found = true;
            buses[at].v_set = row[5];
            slack_limits = SlackLimits {
                p_min: row[9],
                p_max: row[8],
                q_min: row[4],
                q_max: row[3],
            };
        }
    }

    let case = NetworkCase::new(base_mva, buses, branches, slack_limits)?;
    let topo = validate_radial(&case);
    if !topo.is_tree() {
        return Err(CaseError::NotRadial {
            connected: topo.connected,
            acyclic: topo.acyclic,
        });
    }
    Ok((case, warnings))
}

/// Writes a case in the same subset, with full `f64` precision.
pub fn serialize_case(case: &NetworkCase) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let base = case.base_mva();
    let _ = writeln!(out, "function mpc = dgplan_case");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", base);

    let _ = writeln!(out, "\n%% bus data");
    let _ = writeln!(
        out,
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
    );
    let _ = writeln!(out, "mpc.bus = [");
    for b in case.buses() {
        let (kind, vm) = match b.kind {
            BusKind::Slack => (3, b.v_set),
            BusKind::PQ => (1, 1.0),
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t{}\t0\t{}\t1\t{}\t{};",
            b.id, kind, b.p_load, b.q_load, vm, b.base_kv, b.v_max, b.v_min
        );
    }
    let _ = writeln!(out, "];");

    let slack = &case.buses()[case.slack_index()];
    let lim = case.slack_limits();
    let _ = writeln!(out, "\n%% generator data");
    let _ = writeln!(
        out,
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin"
    );
    let _ = writeln!(out, "mpc.gen = [");
    let _ = writeln!(
        out,
        "\t{}\t0\t0\t{}\t{}\t{}\t{}\t1\t{}\t{};",
        slack.id, lim.q_max, lim.q_min, slack.v_set, base, lim.p_max, lim.p_min
    );
    let _ = writeln!(out, "];");

    let id = |k: usize| case.buses()[k].id;
    let _ = writeln!(out, "\n%% branch data");
    let _ = writeln!(
        out,
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus"
    );
    let _ = writeln!(out, "mpc.branch = [");
    for br in case.branches() {
        let rate_a = br.i_max.map_or(0.0, |i| i * base);
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t{};",
            id(br.from),
            id(br.to),
            br.r,
            br.x,
            br.b_shunt,
            rate_a,
            u8::from(br.in_service)
        );
    }
    let _ = writeln!(out, "];");

    if case
        .branches()
        .iter()
        .any(|b| b.pl_max.is_some() || b.ql_max.is_some())
    {
        let _ = writeln!(out, "\n%% branch flow limits (MW, MVar; 0 = unbounded)");
        let _ = writeln!(out, "mpc.branch_limits = [");
        for br in case.branches() {
            let _ = writeln!(
                out,
                "\t{}\t{}\t{}\t{};",
                id(br.from),
                id(br.to),
                br.pl_max.unwrap_or(0.0),
                br.ql_max.unwrap_or(0.0)
            );
        }
        let _ = writeln!(out, "];");
    }

    let dgs: Vec<_> = case.buses().iter().filter(|b| b.p_gen != 0.0).collect();
    if !dgs.is_empty() {
        let _ = writeln!(out, "\n%% distributed generation (MW)");
        let _ = writeln!(out, "mpc.dg = [");
        for b in dgs {
            let _ = writeln!(out, "\t{}\t{};", b.id, b.p_gen);
        }
        let _ = writeln!(out, "];");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::builtin_ieee33;

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 12.66 1 1.05 0.95;
    2 1 1 0 0 0 1 1 0 12.66 1 1.05 0.95;  % the load
];
mpc.gen = [
    1 0 0 10 -10 1 100 1 10 -10;
];
mpc.branch = [
    1 2 0.05 0.05 0 0 0 0 0 0 1;
];
";

    #[test]
    fn two_bus_round_trip() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.branches().len(), 1);
        let br = &case.branches()[0];
        assert_eq!((br.r, br.x), (0.05, 0.05));
        assert_eq!(br.i_max, None);
        assert_eq!(case.base_mva(), 100.0);
        assert_eq!(case.buses()[1].p_load, 1.0);
    }

    #[test]
    fn builtin_text_parses_to_builtin() {
        let text = serialize_case(&builtin_ieee33());
        let case = parse_case(&text).unwrap();
        assert_eq!(case.bus_count(), 33);
        assert_eq!(case.branches().len(), 32);
        assert!((case.total_p_load() - 3.72).abs() < 0.006);
        assert!((case.total_q_load() - 2.3).abs() < 1e-9);
        assert_eq!(case, builtin_ieee33());
    }

    #[test]
    fn multiple_slack_is_rejected() {
        let text = TWO_BUS.replace("2 1 1 0 0 0", "2 3 1 0 0 0");
        let err = parse_case(&text).unwrap_err();
        assert_eq!(err, CaseError::MultipleSlack(vec![1, 2]));
        assert!(err.to_string().contains("multiple slack buses"));
    }

    #[test]
    fn missing_slack_is_rejected() {
        let text = TWO_BUS.replace("1 3 0 0 0 0", "1 1 0 0 0 0");
        assert_eq!(parse_case(&text).unwrap_err(), CaseError::NoSlack);
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let text = TWO_BUS.replace("2 1 1 0 0 0 1 1 0", "2 1 1x 0 0 0 1 1 0");
        match parse_case(&text).unwrap_err() {
            CaseError::Syntax { line, message } => {
                assert_eq!(line, 6);
                assert!(message.contains("1x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_branch_matrix() {
        let text = TWO_BUS.split("mpc.branch").next().unwrap();
        assert_eq!(
            parse_case(text).unwrap_err(),
            CaseError::MissingMatrix("branch")
        );
    }

    #[test]
    fn duplicate_bus_id() {
        let text = TWO_BUS.replace("2 1 1 0 0 0", "1 1 1 0 0 0");
        assert_eq!(parse_case(&text).unwrap_err(), CaseError::DuplicateBus(1));
    }

    #[test]
    fn unclosed_matrix() {
        let text = "mpc.baseMVA = 1;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;\n";
        assert!(matches!(
            parse_case(text).unwrap_err(),
            CaseError::Syntax { line: 2, .. }
        ));
    }

    #[test]
    fn short_row() {
        let text = TWO_BUS.replace("1 2 0.05 0.05 0 0 0 0 0 0 1;", "1 2 0.05 0.05;");
        assert!(matches!(
            parse_case(&text).unwrap_err(),
            CaseError::ShortRow {
                matrix: "branch",
                found: 4,
                ..
            }
        ));
    }

    #[test]
    fn ignored_columns_warn() {
        let text = TWO_BUS
            .replace("2 1 1 0 0 0 1 1", "2 1 1 0 0 0.2 1 1")
            .replace("0.05 0 0 0 0 0 0 1", "0.05 0 0 5 0 0.98 0 1");
        let (_, warnings) = parse_case_with_warnings(&text).unwrap();
        assert_eq!(warnings.len(), 3);
        assert!(warnings.iter().any(|w| w.message.contains("shunt")));
        assert!(warnings.iter().any(|w| w.message.contains("tap ratio")));
    }

    #[test]
    fn rate_a_and_branch_limits() {
        let text = TWO_BUS.replace("0.05 0 0 0 0 0 0 1", "0.05 0 5 0 0 0 0 1")
            + "mpc.branch_limits = [ 2 1 3.5 0 ];\n";
        let case = parse_case(&text).unwrap();
        let br = &case.branches()[0];
        assert_eq!(br.i_max, Some(0.05));
        assert_eq!(br.pl_max, Some(3.5));
        assert_eq!(br.ql_max, None);
    }

    #[test]
    fn gen_row_sets_slack_limits_and_setpoint() {
        let text = TWO_BUS.replace("1 0 0 10 -10 1 100 1 10 -10", "1 0 0 4 -3 1.02 100 1 6 -2");
        let case = parse_case(&text).unwrap();
        let lim = case.slack_limits();
        assert_eq!((lim.p_min, lim.p_max, lim.q_min, lim.q_max), (-2.0, 6.0, -3.0, 4.0));
        assert_eq!(case.buses()[0].v_set, 1.02);
    }

    #[test]
    fn meshed_case_is_rejected() {
        let text = TWO_BUS.replace(
            "1 2 0.05 0.05 0 0 0 0 0 0 1;",
            "1 2 0.05 0.05 0 0 0 0 0 0 1;\n 2 1 0.1 0.1 0 0 0 0 0 0 1;",
        );
        assert!(matches!(
            parse_case(&text).unwrap_err(),
            CaseError::NotRadial { acyclic: false, .. }
        ));
    }

    #[test]
    fn pv_bus_is_unsupported() {
        let text = TWO_BUS.replace("2 1 1 0 0 0", "2 2 1 0 0 0");
        assert!(matches!(
            parse_case(&text).unwrap_err(),
            CaseError::UnsupportedBusType { bus: 2, kind: 2 }
        ));
    }
}
