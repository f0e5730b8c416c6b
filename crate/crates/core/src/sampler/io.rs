//! `traj-ens/1` ensemble files.
//!
//! Line 1 is a JSON header; each following line holds one trajectory as
//! comma-separated outcome indices. Lines end with LF. Decimals in the header
//! carry 17 significant digits so they read back bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{Trajectory, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::fmt::decimal;

pub const FORMAT_TAG: &str = "traj-ens/1";

#[derive(Deserialize)]
struct Header {
    format: String,
    dt: f64,
    k: usize,
    n: usize,
    omega_values: Vec<f64>,
    model_fingerprint: String,
    master_seed: u64,
    created_at: String,
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

pub fn write_ensemble<W: Write>(ens: &TrajectoryEnsemble, mut out: W) -> Result<()> {
    let omegas: Vec<String> = ens.omega_values().iter().map(|&x| decimal(x)).collect();
    writeln!(
        out,
        "{{\"format\":{},\"dt\":{},\"k\":{},\"n\":{},\"omega_values\":[{}],\"model_fingerprint\":{},\"master_seed\":{},\"created_at\":{}}}",
        json_str(FORMAT_TAG),
        decimal(ens.dt()),
        ens.steps(),
        ens.len(),
        omegas.join(","),
        json_str(ens.model_fingerprint()),
        ens.master_seed(),
        json_str(ens.created_at()),
    )?;
    let mut line = String::new();
    for traj in ens.trajectories() {
        line.clear();
        for (l, idx) in traj.outcome_indices.iter().enumerate() {
            if l > 0 {
                line.push(',');
            }
            line.push_str(&idx.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_ensemble(ens: &TrajectoryEnsemble, path: impl AsRef<Path>) -> Result<()> {
    write_ensemble(ens, BufWriter::new(File::create(path)?))
}

pub fn read_ensemble<R: Read>(input: R) -> Result<TrajectoryEnsemble> {
    let mut lines = BufReader::new(input).lines();
    let header_line = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::format(1, "empty file, missing header")),
    };
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::format(1, format!("malformed header: {e}")))?;
    if header.format != FORMAT_TAG {
        let message = if header.format.starts_with("traj-ens/") {
            format!("unsupported version {:?}, expected {FORMAT_TAG:?}", header.format)
        } else {
            format!("bad magic {:?}, expected {FORMAT_TAG:?}", header.format)
        };
        return Err(Error::format(1, message));
    }
    if header.k == 0 || header.n == 0 {
        return Err(Error::format(1, "k and n must be positive"));
    }
    if !(header.dt > 0.0) {
        return Err(Error::format(1, format!("dt must be positive, got {}", header.dt)));
    }
    if header.omega_values.is_empty() {
        return Err(Error::format(1, "omega_values is empty"));
    }

    let n_values = header.omega_values.len();
    let mut trajectories = Vec::with_capacity(header.n);
    for row in 0..header.n {
        let line_no = row + 2;
        let line = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(Error::format(
                    line_no,
                    format!(
                        "expected {} trajectory rows, found {row}; row {} is missing",
                        header.n,
                        row + 1
                    ),
                ))
            }
        };
        let mut outcome_indices = Vec::with_capacity(header.k);
        for field in line.split(',') {
            let idx: usize = field.trim().parse().map_err(|_| {
                Error::format(line_no, format!("row {}: {field:?} is not an outcome index", row + 1))
            })?;
            if idx >= n_values {
                return Err(Error::format(
                    line_no,
                    format!("row {}: outcome index {idx} out of range 0..{n_values}", row + 1),
                ));
            }
            outcome_indices.push(idx);
        }
        if outcome_indices.len() != header.k {
            return Err(Error::format(
                line_no,
                format!(
                    "row {} has {} entries, expected k = {}",
                    row + 1,
                    outcome_indices.len(),
                    header.k
                ),
            ));
        }
        trajectories.push(Trajectory {
            outcome_indices,
            grid_dt: header.dt,
            t0: 0.0,
        });
    }
    for (extra, line) in lines.enumerate() {
        if !line?.trim().is_empty() {
            return Err(Error::format(
                header.n + 2 + extra,
                format!("unexpected data after the {} declared rows", header.n),
            ));
        }
    }

    TrajectoryEnsemble::new(
        trajectories,
        header.omega_values,
        header.model_fingerprint,
        header.master_seed,
        header.created_at,
    )
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<TrajectoryEnsemble> {
    read_ensemble(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = concat!(
        "{\"format\":\"traj-ens/1\",\"dt\":0.20000000000000001,\"k\":3,\"n\":2,",
        "\"omega_values\":[-1,1],\"model_fingerprint\":\"abc123\",\"master_seed\":7,",
        "\"created_at\":\"2026-01-01T00:00:00Z\"}\n",
        "0,1,1\n",
        "1,1,0\n",
    );

    #[test]
    fn hand_written_fixture_parses() {
        let ens = read_ensemble(FIXTURE.as_bytes()).unwrap();
        assert_eq!((ens.steps(), ens.len()), (3, 2));
        assert_eq!(ens.dt(), 0.2);
        assert_eq!(ens.omega_values(), &[-1.0, 1.0]);
        assert_eq!(ens.trajectory(1).outcome_indices, vec![1, 1, 0]);
        assert_eq!(ens.master_seed(), 7);
        // writing reproduces the fixture byte for byte
        let mut buf = Vec::new();
        write_ensemble(&ens, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), FIXTURE);
    }

    fn expect_format_error(text: &str, line: usize, needle: &str) {
        match read_ensemble(text.as_bytes()) {
            Err(Error::Format { line: l, message }) => {
                assert_eq!(l, line, "{message}");
                assert!(message.contains(needle), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_names_the_row() {
        let truncated = &FIXTURE[..FIXTURE.len() - "1,1,0\n".len()];
        expect_format_error(truncated, 3, "row 2 is missing");
        let cut_row = &FIXTURE[..FIXTURE.len() - 3];
        expect_format_error(cut_row, 3, "row 2 has 2 entries");
    }

    #[test]
    fn header_problems_are_reported() {
        expect_format_error("", 1, "missing header");
        expect_format_error(&FIXTURE.replace("traj-ens/1", "traj-ens/9"), 1, "unsupported version");
        expect_format_error(&FIXTURE.replace("traj-ens/1", "csv"), 1, "bad magic");
        expect_format_error(&FIXTURE.replace("\"k\":3", "\"k\":\"3\""), 1, "malformed header");
        expect_format_error(&FIXTURE.replace("1,1,0", "1,2,0"), 3, "out of range");
        expect_format_error(&FIXTURE.replace("1,1,0", "1,x,0"), 3, "not an outcome index");
        expect_format_error(&format!("{FIXTURE}0,0,0\n"), 4, "unexpected data");
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            dt_bits in 1u64..0x7FE0_0000_0000_0000,
            omega in proptest::collection::vec(-1e6f64..1e6, 1..4),
            rows in proptest::collection::vec(proptest::collection::vec(0usize..1000, 5), 1..20),
            seed in any::<u64>(),
        ) {
            let dt = f64::from_bits(dt_bits);
            let n_values = omega.len();
            let trajectories = rows
                .into_iter()
                .map(|r| Trajectory {
                    outcome_indices: r.into_iter().map(|i| i % n_values).collect(),
                    grid_dt: dt,
                    t0: 0.0,
                })
                .collect();
            let ens = TrajectoryEnsemble::new(trajectories, omega, "f\"p", seed, "now").unwrap();
            let mut buf = Vec::new();
            write_ensemble(&ens, &mut buf).unwrap();
            let back = read_ensemble(buf.as_slice()).unwrap();
            prop_assert_eq!(back, ens);
        }
    }
}
