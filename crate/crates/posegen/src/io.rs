//! CSV forms of the working space, selections and projections.

use std::fmt::Write;

use crate::chain::{Joints, KinematicChain};
use crate::sampling::Spherical;
use crate::workspace::PoseRecord;
use crate::PosegenError;

pub const WORKSPACE_HEADER: &str = "q1,q2,q3,q4,q5,q6,r,az,el,feasible";

/// One workspace CSV row; trajectories are not serialized.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkspaceRow {
    pub q: Joints,
    pub spherical: Spherical,
    pub feasible: bool,
}

impl From<&PoseRecord> for WorkspaceRow {
    fn from(r: &PoseRecord) -> Self {
        Self { q: r.q, spherical: r.spherical, feasible: r.feasible }
    }
}

// `{}` on f64 prints the shortest text that parses back to the same bits.
pub fn workspace_csv<'a>(rows: impl IntoIterator<Item = &'a WorkspaceRow>) -> String {
    let mut s = format!("{WORKSPACE_HEADER}\n");
    for r in rows {
        for v in r.q {
            write!(s, "{v},").unwrap();
        }
        let sp = r.spherical;
        writeln!(s, "{},{},{},{}", sp.r, sp.azimuth, sp.elevation, u8::from(r.feasible)).unwrap();
    }
    s
}

pub fn read_workspace_csv(text: &str) -> Result<Vec<WorkspaceRow>, PosegenError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == WORKSPACE_HEADER => {}
        other => return Err(PosegenError::Data(format!("expected header {WORKSPACE_HEADER:?}, got {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| PosegenError::Data(format!("line {}: {what}", i + 2));
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 10 {
                return Err(bad(&format!("expected 10 fields, got {}", cells.len())));
            }
            let num = |k: usize| cells[k].parse::<f64>().map_err(|_| bad(&format!("field {} is not a number", k + 1)));
            let q: Joints = [num(0)?, num(1)?, num(2)?, num(3)?, num(4)?, num(5)?];
            let spherical = Spherical { r: num(6)?, azimuth: num(7)?, elevation: num(8)? };
            let feasible = match cells[9] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("feasible must be 0 or 1")),
            };
            Ok(WorkspaceRow { q, spherical, feasible })
        })
        .collect()
}

/// End-effector positions of feasible rows projected onto the x-z and y-z
/// planes.
pub fn projection_csvs(chain: &KinematicChain, rows: &[WorkspaceRow]) -> (String, String) {
    let mut xz = String::from("x,z\n");
    let mut yz = String::from("y,z\n");
    for r in rows.iter().filter(|r| r.feasible) {
        let p = chain.fk(&r.q).end_effector();
        writeln!(xz, "{},{}", p.x, p.z).unwrap();
        writeln!(yz, "{},{}", p.y, p.z).unwrap();
    }
    (xz, yz)
}
