//! CSV encodings of the data types. Floats are written in shortest
//! round-trip form so that output is byte-stable and rereads exactly.
//!
//! Controls are written one row per cell start plus a closing row at `T`
//! repeating the last value; measures share one grid and carry one
//! `atom,density` column pair per constraint (the density of the cell
//! starting at the node, 0 on the last row).

use nalgebra::DVector;

use crate::bv::{BVPath, NBVMeasure};
use crate::ekeland::HistoryEntry;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::ode::{ControlSignal, Trajectory};

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

fn row(w: &mut csv::Writer<Vec<u8>>, fields: impl IntoIterator<Item = String>) {
    w.write_record(fields.into_iter().collect::<Vec<_>>()).expect("writing to memory cannot fail");
}

fn header(w: &mut csv::Writer<Vec<u8>>, first: &str, groups: &[(&str, &str, usize)]) {
    let mut h = vec![first.to_string()];
    for (prefix, suffix, count) in groups {
        h.extend((1..=*count).map(|i| format!("{prefix}{i}{suffix}")));
    }
    row(w, h);
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let mut w = writer();
    header(&mut w, "t", &[("q", "", traj.dim())]);
    for (k, q) in traj.states.iter().enumerate() {
        row(&mut w, std::iter::once(fmt(traj.grid.t(k))).chain(q.iter().map(|v| fmt(*v))));
    }
    finish(w)
}

pub fn control_csv(u: &ControlSignal) -> Vec<u8> {
    let mut w = writer();
    header(&mut w, "t", &[("u", "", u.dim())]);
    let n = u.grid.n_cells();
    for k in 0..=n {
        let v = &u.values[k.min(n - 1)];
        row(&mut w, std::iter::once(fmt(u.grid.t(k))).chain(v.iter().map(|x| fmt(*x))));
    }
    finish(w)
}

pub fn bv_path_csv(p: &BVPath) -> Vec<u8> {
    let mut w = writer();
    let n = p.dim();
    header(&mut w, "t", &[("p", "_left", n), ("p", "_right", n)]);
    let last = p.grid.n_cells();
    for k in 0..=last {
        let right = if k == last { &p.value[k] } else { &p.right[k] };
        let fields = std::iter::once(fmt(p.grid.t(k)))
            .chain(p.left[k].iter().map(|v| fmt(*v)))
            .chain(right.iter().map(|v| fmt(*v)));
        row(&mut w, fields);
    }
    finish(w)
}

/// Measures on a common grid.
pub fn measures_csv(eta: &[NBVMeasure], grid: &TimeGrid) -> Result<Vec<u8>> {
    if eta.iter().any(|e| &e.grid != grid) {
        return Err(Error::InvalidInput("measures must share the output grid".into()));
    }
    let mut w = writer();
    let mut h = vec!["t".to_string()];
    for i in 1..=eta.len() {
        h.push(format!("atom{i}"));
        h.push(format!("density{i}"));
    }
    row(&mut w, h);
    let n = grid.n_cells();
    for k in 0..=n {
        let mut fields = vec![fmt(grid.t(k))];
        for e in eta {
            fields.push(fmt(e.atoms[k]));
            fields.push(fmt(if k < n { e.densities[k] } else { 0.0 }));
        }
        row(&mut w, fields);
    }
    Ok(finish(w))
}

pub fn probe_csv(rows: &[(f64, f64)]) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["rho".to_string(), "err".to_string()]);
    for (rho, err) in rows {
        row(&mut w, [fmt(*rho), fmt(*err)]);
    }
    finish(w)
}

pub fn history_csv(history: &[HistoryEntry]) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["iter", "J", "eps", "feasibility", "cost"].map(String::from));
    for h in history {
        row(&mut w, [h.iter.to_string(), fmt(h.j), fmt(h.eps), fmt(h.feasibility), fmt(h.cost)]);
    }
    finish(w)
}

/// Parses a numeric CSV with a header into `(header, rows)`.
fn read_table(text: &str, what: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{what}: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidInput(format!("{what}: {e}")))?;
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("{what}: row {}: `{f}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!("{what}: need at least two rows")));
    }
    Ok((header, rows))
}

fn check_header(header: &[String], expected: &[String], what: &str) -> Result<()> {
    if header != expected {
        return Err(Error::InvalidInput(format!(
            "{what}: expected header `{}`, got `{}`",
            expected.join(","),
            header.join(",")
        )));
    }
    Ok(())
}

/// Reads a control written by [`control_csv`]; `m` is the control dimension.
pub fn read_control(text: &str, m: usize) -> Result<ControlSignal> {
    let (header, rows) = read_table(text, "control")?;
    let expected: Vec<String> = std::iter::once("t".to_string()).chain((1..=m).map(|i| format!("u{i}"))).collect();
    check_header(&header, &expected, "control")?;
    let grid = TimeGrid::new(rows.iter().map(|r| r[0]).collect())?;
    let values = rows[..rows.len() - 1].iter().map(|r| r[1..].to_vec()).collect();
    ControlSignal::new(grid, values)
}

/// Reads `j` measures written by [`measures_csv`].
pub fn read_measures(text: &str, j: usize) -> Result<Vec<NBVMeasure>> {
    let (header, rows) = read_table(text, "measures")?;
    let mut expected = vec!["t".to_string()];
    for i in 1..=j {
        expected.push(format!("atom{i}"));
        expected.push(format!("density{i}"));
    }
    check_header(&header, &expected, "measures")?;
    let grid = TimeGrid::new(rows.iter().map(|r| r[0]).collect())?;
    (0..j)
        .map(|i| {
            let atoms = rows.iter().map(|r| r[1 + 2 * i]).collect();
            let densities = rows[..rows.len() - 1].iter().map(|r| r[2 + 2 * i]).collect();
            NBVMeasure::new(grid.clone(), atoms, densities)
        })
        .collect()
}

/// Reads a trajectory written by [`trajectory_csv`].
pub fn read_trajectory(text: &str, n: usize) -> Result<Trajectory> {
    let (header, rows) = read_table(text, "trajectory")?;
    let expected: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("q{i}"))).collect();
    check_header(&header, &expected, "trajectory")?;
    let grid = TimeGrid::new(rows.iter().map(|r| r[0]).collect())?;
    let states = rows.iter().map(|r| DVector::from_column_slice(&r[1..])).collect();
    Ok(Trajectory { grid, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_round_trip() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.35, 1.0 / 3.0 + 0.5]).unwrap();
        let u = ControlSignal::new(g, vec![vec![1.0, -0.5], vec![0.1 + 0.2, 2.0], vec![-1e-17, 3.0]]).unwrap();
        let text = String::from_utf8(control_csv(&u)).unwrap();
        assert!(text.starts_with("t,u1,u2\n0,1,-0.5\n"));
        let back = read_control(&text, 2).unwrap();
        assert_eq!(back.grid, u.grid);
        assert_eq!(back.values, u.values);
    }

    #[test]
    fn measures_round_trip() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let a = NBVMeasure::new(g.clone(), vec![0.0, 0.25, 0.0, 1.0], vec![0.5, 0.0, 0.125]).unwrap();
        let b = NBVMeasure::zero(&g);
        let bytes = measures_csv(&[a.clone(), b.clone()], &g).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("t,atom1,density1,atom2,density2\n"));
        let back = read_measures(&text, 2).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(matches!(read_control("t,u1\n0,1\n1,x\n", 1), Err(Error::InvalidInput(m)) if m.contains("row 2")));
        assert!(matches!(read_control("t,v1\n0,1\n1,1\n", 1), Err(Error::InvalidInput(m)) if m.contains("header")));
        assert!(read_measures("t,atom1,density1\n0,0,-1\n1,0,0\n", 1).is_err());
    }

    #[test]
    fn path_and_tables() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let p = BVPath::scalar(g, &[1.0, 1.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        let text = String::from_utf8(bv_path_csv(&p)).unwrap();
        assert_eq!(text, "t,p1_left,p1_right\n0,1,1\n0.5,1,2\n1,3,3\n");
        assert_eq!(String::from_utf8(probe_csv(&[(0.5, 1e-3)])).unwrap(), "rho,err\n0.5,0.001\n");
    }
}
