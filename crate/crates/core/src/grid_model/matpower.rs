//! Parser for the supported MATPOWER case text subset.
//!
//! Recognized tables: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch`,
//! `mpc.gencost` (polynomial model of degree ≤ 2 only), plus an optional
//! `mpc.bus_ang_limits` extension table of `[bus_id ang_min_deg ang_max_deg]`
//! rows overriding the default ±90° phase bounds.

use std::collections::HashMap;

use super::{Branch, Bus, BusKind, CaseError, Generator, Network, DEFAULT_ANGLE_BOUND};

#[derive(PartialEq, Clone, Copy)]
enum Section {
    None,
    Bus,
    Gen,
    Branch,
    GenCost,
    AngLimits,
}

struct RawGen {
    bus: usize,
    pg: f64,
    qg: f64,
    qmax: f64,
    qmin: f64,
    vg: f64,
    status: bool,
    pmax: f64,
    pmin: f64,
    line: usize,
}

pub(super) fn parse_matpower(text: &str) -> Result<Network, CaseError> {
    let mut name = String::from("case");
    let mut base_mva: Option<f64> = None;
    let mut bus_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut gen_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut branch_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut cost_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut ang_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut section = Section::None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        if line.starts_with("mpc.version") {
            continue;
        }
        if line.starts_with("mpc.baseMVA") {
            let eq = line.find('=').ok_or_else(|| syntax(lineno, 1, "expected '=' after mpc.baseMVA"))?;
            let val = line[eq + 1..].trim().trim_end_matches(';');
            base_mva = Some(parse_num(val, lineno, eq + 2)?);
            continue;
        }
        if section == Section::None {
            let header = |key: &str| line.starts_with(key) && line.contains('=') && line.contains('[');
            if header("mpc.bus_ang_limits") {
                section = Section::AngLimits;
            } else if header("mpc.bus") && !line.starts_with("mpc.bus_name") {
                section = Section::Bus;
            } else if header("mpc.gencost") {
                section = Section::GenCost;
            } else if header("mpc.gen") {
                section = Section::Gen;
            } else if header("mpc.branch") {
                section = Section::Branch;
            } else if line.starts_with("mpc.") {
                // unrecognized table or scalar; skip scalars, reject tables
                if line.contains('[') && !line.contains(']') {
                    return Err(CaseError::Unsupported(format!(
                        "line {lineno}: unsupported table '{}'",
                        line.split('=').next().unwrap_or(line).trim()
                    )));
                }
            }
            continue;
        }
        if line.starts_with("];") || line == "]" {
            section = Section::None;
            continue;
        }
        let row_text = line.trim_end_matches(';');
        let row = parse_row(row_text, lineno)?;
        match section {
            Section::Bus => bus_rows.push((lineno, row)),
            Section::Gen => gen_rows.push((lineno, row)),
            Section::Branch => branch_rows.push((lineno, row)),
            Section::GenCost => cost_rows.push((lineno, row)),
            Section::AngLimits => ang_rows.push((lineno, row)),
            Section::None => unreachable!(),
        }
        if line.ends_with("];") {
            section = Section::None;
        }
    }

    let base = base_mva.ok_or_else(|| CaseError::Semantic("missing mpc.baseMVA".into()))?;
    if bus_rows.is_empty() {
        return Err(CaseError::Semantic("missing mpc.bus table".into()));
    }

    // Buses, remapped to contiguous internal indices in file order.
    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut ext2int: HashMap<usize, usize> = HashMap::new();
    for (line, row) in &bus_rows {
        if row.len() < 13 {
            return Err(syntax(*line, 1, "bus row needs 13 columns"));
        }
        let ext_id = row[0] as usize;
        let id = buses.len();
        if ext2int.insert(ext_id, id).is_some() {
            return Err(CaseError::Semantic(format!("duplicate bus id {ext_id} (line {line})")));
        }
        let kind = match row[1] as i64 {
            1 => BusKind::Load,
            2 => BusKind::Generator,
            3 => BusKind::Reference,
            k => {
                return Err(CaseError::Unsupported(format!(
                    "bus {ext_id}: bus type {k} (line {line})"
                )))
            }
        };
        buses.push(Bus {
            id,
            ext_id,
            kind,
            p_demand_nominal: row[2] / base,
            q_demand_nominal: row[3] / base,
            v_min: row[12],
            v_max: row[11],
            ang_min: -DEFAULT_ANGLE_BOUND,
            ang_max: DEFAULT_ANGLE_BOUND,
            shunt_g: row[4] / base,
            shunt_b: row[5] / base,
            base_kv: row[9],
            vm_operating: row[7],
            va_operating: row[8].to_radians(),
        });
    }

    for (line, row) in &ang_rows {
        if row.len() < 3 {
            return Err(syntax(*line, 1, "bus_ang_limits row needs 3 columns"));
        }
        let ext_id = row[0] as usize;
        let &id = ext2int
            .get(&ext_id)
            .ok_or_else(|| CaseError::Semantic(format!("bus_ang_limits references bus {ext_id} (line {line})")))?;
        buses[id].ang_min = row[1].to_radians();
        buses[id].ang_max = row[2].to_radians();
    }

    // Generators: pair with gencost by row position, drop out-of-service units,
    // then aggregate parallel machines per bus.
    if !cost_rows.is_empty() && cost_rows.len() != gen_rows.len() {
        return Err(CaseError::Semantic(format!(
            "gencost has {} rows but gen has {}",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut raw_gens = Vec::new();
    let mut costs = Vec::new();
    for (k, (line, row)) in gen_rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(syntax(*line, 1, "gen row needs at least 10 columns"));
        }
        let ext_bus = row[0] as usize;
        let &bus = ext2int
            .get(&ext_bus)
            .ok_or_else(|| CaseError::Semantic(format!("generator references bus {ext_bus} (line {line})")))?;
        raw_gens.push(RawGen {
            bus,
            pg: row[1] / base,
            qg: row[2] / base,
            qmax: row[3] / base,
            qmin: row[4] / base,
            vg: row[5],
            status: row[7] != 0.0,
            pmax: row[8] / base,
            pmin: row[9] / base,
            line: *line,
        });
        costs.push(parse_cost(cost_rows.get(k))?);
    }
    let generators = aggregate_generators(&raw_gens, &costs)?;

    // Branches: drop out-of-service, normalize tap.
    let mut branches = Vec::new();
    for (line, row) in &branch_rows {
        if row.len() < 11 {
            return Err(syntax(*line, 1, "branch row needs at least 11 columns"));
        }
        if row[10] == 0.0 {
            continue; // out of service
        }
        let (fe, te) = (row[0] as usize, row[1] as usize);
        let &from_bus = ext2int
            .get(&fe)
            .ok_or_else(|| CaseError::Semantic(format!("branch references bus {fe} (line {line})")))?;
        let &to_bus = ext2int
            .get(&te)
            .ok_or_else(|| CaseError::Semantic(format!("branch references bus {te} (line {line})")))?;
        let tap = if row[8] == 0.0 { 1.0 } else { row[8] };
        branches.push(Branch {
            from_bus,
            to_bus,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap,
            shift: row[9].to_radians(),
            s_max: row[5] / base,
        });
    }

    // Normalize bus kinds against the surviving generator set.
    let gen_buses: std::collections::HashSet<usize> = generators.iter().map(|g| g.bus).collect();
    for b in &mut buses {
        match b.kind {
            BusKind::Generator if !gen_buses.contains(&b.id) => b.kind = BusKind::Load,
            BusKind::Load if gen_buses.contains(&b.id) => b.kind = BusKind::Generator,
            _ => {}
        }
    }

    Ok(Network {
        name,
        base_mva: base,
        buses,
        generators,
        branches,
    })
}

/// Quadratic cost in MW terms: (c2, c1, c0).
fn parse_cost(row: Option<&(usize, Vec<f64>)>) -> Result<(f64, f64, f64), CaseError> {
    let Some((line, row)) = row else {
        return Ok((0.0, 0.0, 0.0));
    };
    if row.len() < 4 {
        return Err(syntax(*line, 1, "gencost row needs at least 4 columns"));
    }
    let model = row[0] as i64;
    if model != 2 {
        return Err(CaseError::Unsupported(format!(
            "gencost model {model} (line {line}); only polynomial (2) is supported"
        )));
    }
    let ncost = row[3] as usize;
    if ncost > 3 {
        return Err(CaseError::Unsupported(format!(
            "polynomial cost of degree {} (line {line}); degree ≤ 2 only",
            ncost.saturating_sub(1)
        )));
    }
    if row.len() < 4 + ncost {
        return Err(syntax(*line, 1, "gencost row shorter than its ncost"));
    }
    let coeffs = &row[4..4 + ncost];
    Ok(match ncost {
        0 => (0.0, 0.0, 0.0),
        1 => (0.0, 0.0, coeffs[0]),
        2 => (0.0, coeffs[0], coeffs[1]),
        _ => (coeffs[0], coeffs[1], coeffs[2]),
    })
}

/// Merge parallel in-service machines at one bus into a single generator.
///
/// Bounds and setpoints sum. The combined cost assumes dispatch split
/// proportional to `p_max`, which keeps the aggregate quadratic:
/// with weights wᵢ = pmaxᵢ/Σpmax, c2' = Σ c2ᵢwᵢ², c1' = Σ c1ᵢwᵢ, c0' = Σ c0ᵢ.
fn aggregate_generators(
    raw: &[RawGen],
    costs: &[(f64, f64, f64)],
) -> Result<Vec<Generator>, CaseError> {
    let mut by_bus: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (k, g) in raw.iter().enumerate() {
        if !g.status {
            continue;
        }
        by_bus.entry(g.bus).or_insert_with(|| {
            order.push(g.bus);
            Vec::new()
        });
        by_bus.get_mut(&g.bus).unwrap().push(k);
    }
    let mut out = Vec::with_capacity(order.len());
    for bus in order {
        let idxs = &by_bus[&bus];
        let total_pmax: f64 = idxs.iter().map(|&k| raw[k].pmax).sum();
        if idxs.len() > 1 && total_pmax <= 0.0 {
            return Err(CaseError::Semantic(format!(
                "cannot aggregate generators with zero total p_max (line {})",
                raw[idxs[0]].line
            )));
        }
        let mut g = Generator {
            bus,
            p_min: 0.0,
            p_max: 0.0,
            q_min: 0.0,
            q_max: 0.0,
            cost_c2: 0.0,
            cost_c1: 0.0,
            cost_c0: 0.0,
            pg_setpoint: 0.0,
            qg_setpoint: 0.0,
            vg_setpoint: raw[idxs[0]].vg,
        };
        for &k in idxs {
            let r = &raw[k];
            let w = if idxs.len() == 1 { 1.0 } else { r.pmax / total_pmax };
            g.p_min += r.pmin;
            g.p_max += r.pmax;
            g.q_min += r.qmin;
            g.q_max += r.qmax;
            g.pg_setpoint += r.pg;
            g.qg_setpoint += r.qg;
            let (c2, c1, c0) = costs[k];
            g.cost_c2 += c2 * w * w;
            g.cost_c1 += c1 * w;
            g.cost_c0 += c0;
        }
        out.push(g);
    }
    Ok(out)
}

fn parse_row(text: &str, line: usize) -> Result<Vec<f64>, CaseError> {
    let mut out = Vec::new();
    let mut col = 1;
    for tok in text.split_whitespace() {
        col += 1;
        out.push(parse_num(tok, line, col)?);
    }
    if out.is_empty() {
        return Err(syntax(line, 1, "empty table row"));
    }
    Ok(out)
}

fn parse_num(tok: &str, line: usize, col: usize) -> Result<f64, CaseError> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| syntax(line, col, &format!("expected a number, found '{tok}'")))
}

fn syntax(line: usize, col: usize, msg: &str) -> CaseError {
    CaseError::Syntax {
        line,
        col,
        msg: msg.to_string(),
    }
}
