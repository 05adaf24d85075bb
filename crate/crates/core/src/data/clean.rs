use chrono::Timelike;

use super::frame::{Column, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::util::{mean, sample_std};

/// Replaces values further than `k` sample standard deviations from the
/// column mean by linear interpolation between the nearest kept neighbours.
/// Applies to every column.
pub fn remove_outliers(frame: &TimeSeriesFrame, k: f64) -> Result<TimeSeriesFrame> {
    Ok(remove_outliers_in(frame, k, &Column::ALL)?.0)
}

/// Like [`remove_outliers`] restricted to `columns`. Missing values (NaN) in
/// any column are always filled. Returns the frame and the number of
/// replaced values.
pub fn remove_outliers_in(frame: &TimeSeriesFrame, k: f64, columns: &[Column]) -> Result<(TimeSeriesFrame, usize)> {
    remove_outliers_blockwise(frame, k, columns, frame.len().max(1))
}

/// Outlier screening with mean/std computed separately over consecutive
/// blocks of `block_len` samples, so a lasting level change is not mistaken
/// for a run of outliers. Missing values are filled across block edges.
pub fn remove_outliers_blockwise(
    frame: &TimeSeriesFrame,
    k: f64,
    columns: &[Column],
    block_len: usize,
) -> Result<(TimeSeriesFrame, usize)> {
    if frame.is_empty() {
        return Err(Error::input("cannot clean an empty frame"));
    }
    if k.is_nan() || k < 0.0 {
        return Err(Error::config(format!("outlier threshold must be non-negative, got {k}")));
    }
    if block_len == 0 {
        return Err(Error::config("outlier block length must be positive"));
    }
    let mut out = frame.clone();
    let mut replaced = 0;
    for c in Column::ALL {
        let x = out.col_mut(c);
        if columns.contains(&c) {
            for block in x.chunks_mut(block_len) {
                let finite: Vec<f64> = block.iter().copied().filter(|v| v.is_finite()).collect();
                if finite.len() < 2 {
                    continue;
                }
                let (m, s) = (mean(&finite), sample_std(&finite));
                if s > 0.0 {
                    let flagged: Vec<bool> = block.iter().map(|v| v.is_finite() && (v - m).abs() > k * s).collect();
                    // Mark as missing; the fill below interpolates over the whole column.
                    for (v, f) in block.iter_mut().zip(&flagged) {
                        if *f {
                            *v = f64::NAN;
                        }
                    }
                }
            }
        }
        let flagged: Vec<bool> = x.iter().map(|v| !v.is_finite()).collect();
        replaced += interpolate_flagged(x, &flagged);
    }
    Ok((out, replaced))
}

/// Linear interpolation across flagged runs; edges copy the nearest kept
/// value. Returns how many entries changed.
fn interpolate_flagged(x: &mut [f64], flagged: &[bool]) -> usize {
    let kept: Vec<usize> = (0..x.len()).filter(|&i| !flagged[i]).collect();
    if kept.is_empty() || kept.len() == x.len() {
        return 0;
    }
    let mut n = 0;
    let mut next = 0; // index into `kept` of the first kept position > i
    for i in 0..x.len() {
        while next < kept.len() && kept[next] <= i {
            next += 1;
        }
        if !flagged[i] {
            continue;
        }
        let left = if next > 0 { Some(kept[next - 1]) } else { None };
        let right = kept.get(next).copied();
        x[i] = match (left, right) {
            (Some(l), Some(r)) => {
                let w = (i - l) as f64 / (r - l) as f64;
                x[l] + w * (x[r] - x[l])
            }
            (Some(l), None) => x[l],
            (None, Some(r)) => x[r],
            (None, None) => unreachable!(),
        };
        n += 1;
    }
    n
}

/// Half-hour aggregation of a 5-minute frame: energies summed, everything
/// else averaged. Leading samples before the first half-hour boundary and a
/// partial trailing block are dropped; their count is returned.
pub fn aggregate_30min(frame: &TimeSeriesFrame) -> Result<(TimeSeriesFrame, usize)> {
    if frame.period_minutes() != 5 {
        return Err(Error::input(format!("expected a 5-minute frame, got {} minutes", frame.period_minutes())));
    }
    let ts = frame.timestamps();
    let start = ts.iter().position(|t| t.minute() % 30 == 0 && t.second() == 0).unwrap_or(ts.len());
    let blocks = (ts.len() - start) / 6;
    let dropped = ts.len() - blocks * 6;
    if dropped > 0 {
        log::warn!("aggregation dropped {dropped} samples outside whole half-hour blocks");
    }
    let timestamps = (0..blocks).map(|b| ts[start + 6 * b]).collect();
    let columns = Column::ALL.map(|c| {
        let x = frame.col(c);
        (0..blocks)
            .map(|b| {
                let block = &x[start + 6 * b..start + 6 * b + 6];
                let s: f64 = block.iter().sum();
                if c.is_energy() {
                    s
                } else {
                    s / 6.0
                }
            })
            .collect()
    });
    Ok((TimeSeriesFrame::new(timestamps, 30, columns)?, dropped))
}

/// `1` where heating energy is strictly positive.
pub fn derive_valve_labels(frame: &TimeSeriesFrame) -> Vec<u8> {
    frame.col(Column::Hwe).iter().map(|&h| u8::from(h > 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDate, NaiveDateTime};

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn frame_with(period: u32, oat: Vec<f64>) -> TimeSeriesFrame {
        let n = oat.len();
        let ts = (0..n).map(|i| t0() + chrono::Duration::minutes(period as i64 * i as i64)).collect();
        let mut cols: [Vec<f64>; 8] = std::array::from_fn(|_| vec![1.0; n]);
        cols[0] = oat;
        TimeSeriesFrame::new(ts, period, cols).unwrap()
    }

    #[test]
    fn spike_is_replaced() {
        let mut x = vec![0.0; 9];
        x.push(100.0);
        let f = remove_outliers(&frame_with(5, x), 2.0).unwrap();
        // Trailing edge takes the nearest kept value.
        assert_eq!(f.value(Column::Oat, 9), 0.0);
    }

    #[test]
    fn interior_spike_interpolates() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 500.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let f = remove_outliers(&frame_with(5, x), 2.0).unwrap();
        assert!((f.value(Column::Oat, 4) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_infinite_k_are_noops() {
        let f = frame_with(5, vec![5.0, 5.0, 5.0]);
        assert_eq!(remove_outliers(&f, 2.0).unwrap(), f);
        let g = frame_with(5, vec![0.0, 0.0, 0.0, 0.0, 100.0]);
        assert_eq!(remove_outliers(&g, f64::INFINITY).unwrap(), g);
    }

    #[test]
    fn blockwise_keeps_level_shift() {
        let mut x = vec![70.0, 71.0, 72.0, 71.0, 70.0, 71.0, 72.0, 71.0, 70.0, 71.0];
        x.extend([40.0, 41.0]);
        let f = frame_with(5, x.clone());
        let global = remove_outliers(&f, 2.0).unwrap();
        assert_ne!(global.col(Column::Oat), &x[..]);
        let (blocked, n) = remove_outliers_blockwise(&f, 2.0, &[Column::Oat], 10).unwrap();
        assert_eq!(n, 0);
        assert_eq!(blocked.col(Column::Oat), &x[..]);
    }

    #[test]
    fn nan_is_filled() {
        let f = frame_with(5, vec![1.0, f64::NAN, 3.0]);
        let (g, n) = remove_outliers_in(&f, 2.0, &[]).unwrap();
        assert_eq!(n, 1);
        assert_eq!(g.value(Column::Oat, 1), 2.0);
    }

    #[test]
    fn aggregation_examples() {
        let f = frame_with(5, vec![60.0, 61.0, 62.0, 63.0, 64.0, 65.0, 1.0]);
        let (g, dropped) = aggregate_30min(&f).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(dropped, 1);
        assert_eq!(g.value(Column::Oat, 0), 62.5);
        assert_eq!(g.value(Column::Hwe, 0), 6.0);
        assert_eq!(g.period_minutes(), 30);
    }

    #[test]
    fn aggregation_skips_unaligned_head() {
        let n = 8;
        let start = t0() + chrono::Duration::minutes(20);
        let ts = (0..n).map(|i| start + chrono::Duration::minutes(5 * i as i64)).collect();
        let mut cols: [Vec<f64>; 8] = std::array::from_fn(|_| vec![0.0; n]);
        cols[Column::Hwe.index()] = (0..n).map(|i| i as f64).collect();
        let f = TimeSeriesFrame::new(ts, 5, cols).unwrap();
        let (g, dropped) = aggregate_30min(&f).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(g.value(Column::Hwe, 0), (2..8).sum::<usize>() as f64);
        assert_eq!(g.timestamps()[0].minute(), 30);
    }

    #[test]
    fn valve_labels() {
        let mut f = frame_with(30, vec![0.0; 3]);
        f.col_mut(Column::Hwe).copy_from_slice(&[0.0, 0.2, 1e-9]);
        assert_eq!(derive_valve_labels(&f), vec![0, 1, 1]);
    }
}
