//! CSV tables and gnuplot-ready data files.
//!
//! Missing values are written as empty CSV fields and as `NaN` in data files.

use std::io::Write;

use super::uncertainty::{AscanRecord, CalibrationPoint, GroupMean, QuintileRow};
use super::SmoothnessHistogram;
use crate::error::{Error, Result};

fn werr(e: std::io::Error) -> Error {
    Error::Format(format!("write failed: {e}"))
}

pub fn write_ascan_csv<W: Write>(mut w: W, records: &[AscanRecord], um_per_px: f64) -> Result<()> {
    writeln!(w, "volume,bscan,x,pred_px,ref_px,abs_error_px,abs_error_um,sigma_px").map_err(werr)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.volume,
            r.bscan,
            r.x,
            r.pred,
            r.reference,
            r.abs_error_px,
            r.abs_error_px * um_per_px,
            r.sigma
        )
        .map_err(werr)?;
    }
    Ok(())
}

pub fn write_group_csv<W: Write>(mut w: W, groups: &[GroupMean]) -> Result<()> {
    writeln!(w, "volume,bscan,n,mean_sigma_px,mae_px").map_err(werr)?;
    for g in groups {
        let b = g.bscan.map(|b| b.to_string()).unwrap_or_default();
        writeln!(w, "{},{b},{},{},{}", g.volume, g.n, g.mean_sigma, g.mae_px).map_err(werr)?;
    }
    Ok(())
}

pub fn write_quintile_csv<W: Write>(mut w: W, rows: &[QuintileRow]) -> Result<()> {
    writeln!(w, "quintile,n,sigma_min,sigma_max,mean,median,q25,q75,max").map_err(werr)?;
    for q in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            q.quintile,
            q.n,
            q.sigma_min,
            q.sigma_max,
            q.mean_abs_error,
            q.median_abs_error,
            q.q25_abs_error,
            q.q75_abs_error,
            q.max_abs_error
        )
        .map_err(werr)?;
    }
    Ok(())
}

/// `center count` per line.
pub fn write_histogram_dat<W: Write>(mut w: W, h: &SmoothnessHistogram) -> Result<()> {
    writeln!(w, "# adjacent-column difference histogram, bin width {} px, {} pairs", h.bin_width, h.total)
        .map_err(werr)?;
    writeln!(w, "# center_px count").map_err(werr)?;
    for b in &h.bins {
        writeln!(w, "{} {}", b.center, b.count).map_err(werr)?;
    }
    Ok(())
}

/// `sigma mean ci_low ci_high n` per line.
pub fn write_calibration_dat<W: Write>(mut w: W, curve: &[CalibrationPoint]) -> Result<()> {
    writeln!(w, "# sigma_px mean_abs_error_px ci95_low ci95_high n").map_err(werr)?;
    for c in curve {
        writeln!(w, "{} {} {} {} {}", c.sigma, c.mean_abs_error, c.ci_low, c.ci_high, c.n).map_err(werr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::histogram_of;

    #[test]
    fn histogram_file_lists_bins() {
        let h = histogram_of(&[0.0, 0.2, 1.1, -3.0], 1.0).unwrap();
        let mut buf = Vec::new();
        write_histogram_dat(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["-3 1", "0 2", "1 1"]);
    }

    #[test]
    fn group_csv_leaves_volume_rows_blank() {
        let g = GroupMean { volume: 2, bscan: None, n: 4, mean_sigma: 0.5, mae_px: 1.25 };
        let mut buf = Vec::new();
        write_group_csv(&mut buf, &[g]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().nth(1), Some("2,,4,0.5,1.25"));
    }
}
