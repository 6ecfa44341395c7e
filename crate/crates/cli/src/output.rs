//! CSV and summary writers. Floats go out as `{:.16e}`, which round-trips.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use phadapt_core::{PhSystem, StateTrajectory, TimeGrid};

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Thin wrapper over a csv writer that fixes the dialect.
pub struct Table {
    inner: csv::Writer<File>,
}

impl Table {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> io::Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(into_io)?;
        inner.write_record(header.iter().map(AsRef::as_ref)).map_err(into_io)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, cells: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(cells).map_err(into_io)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn into_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

/// `key = value` lines, in insertion order.
#[derive(Default)]
pub struct Summary {
    lines: Vec<String>,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut f = File::create(path)?;
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

pub fn prepare_dir(dir: &Path) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

/// `t, x_1..x_n, y_1..y_m, H, r`; `r` is the local energy residual of the
/// cell ending at `t`, empty on the first row.
pub fn write_trajectory(path: &Path, sys: &PhSystem, traj: &StateTrajectory, residuals: &[f64]) -> io::Result<()> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("x_{k}")));
    header.extend((1..=m).map(|k| format!("y_{k}")));
    header.push("H".into());
    header.push("r".into());
    let mut table = Table::create(path, &header)?;
    for (i, t) in traj.grid().nodes().iter().enumerate() {
        let x = traj.x(i);
        let mut row = vec![float(*t)];
        row.extend(x.iter().map(|v| float(*v)));
        row.extend(traj.y(i).iter().map(|v| float(*v)));
        row.push(float(0.5 * x.dot(&(sys.q() * x))));
        row.push(if i == 0 { String::new() } else { float(residuals[i - 1]) });
        table.row(row)?;
    }
    table.finish()
}

pub fn write_grid(path: &Path, grid: &TimeGrid) -> io::Result<()> {
    let mut table = Table::create(path, &["node", "t", "h"])?;
    for (i, t) in grid.nodes().iter().enumerate() {
        let h = if i == 0 { String::new() } else { float(grid.width(i)) };
        table.row([i.to_string(), float(*t), h])?;
    }
    table.finish()
}
