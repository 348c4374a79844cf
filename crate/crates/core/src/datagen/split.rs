use crate::datagen::record::InteractionRecord;
use crate::error::{Error, Result};

/// Splits a timestamp-sorted dataset by calendar day (UTC).
///
/// The covered days `d_min..=d_max` are divided so that the first
/// `round(n_days * a / (a + b))` days go to train. The split never cuts a
/// day, so records sharing a timestamp always land on the same side;
/// a dataset spanning a single day goes entirely to train.
pub fn split_chronological(
    dataset: &[InteractionRecord],
    ratio: (u32, u32),
) -> Result<(Vec<InteractionRecord>, Vec<InteractionRecord>)> {
    let (a, b) = ratio;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if a + b == 0 {
        return Err(Error::InvalidArgument("split ratio must not be 0:0".into()));
    }
    if dataset.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err(Error::InvalidArgument("dataset is not sorted by timestamp".into()));
    }
    let first = dataset[0].day();
    let n_days = (dataset[dataset.len() - 1].day() - first + 1) as u64;
    let (a, b) = (a as u64, b as u64);
    let train_days = (n_days * a + (a + b) / 2) / (a + b);
    let cut = dataset.partition_point(|r| ((r.day() - first) as u64) < train_days);
    Ok((dataset[..cut].to_vec(), dataset[cut..].to_vec()))
}

/// Records from the last `days` calendar days present in `dataset`.
pub fn last_days(dataset: &[InteractionRecord], days: usize) -> Result<Vec<InteractionRecord>> {
    if days == 0 {
        return Err(Error::InvalidArgument("window must cover at least one day".into()));
    }
    let Some(last) = dataset.iter().map(InteractionRecord::day).max() else {
        return Err(Error::InvalidArgument("empty dataset".into()));
    };
    let first = dataset.iter().map(InteractionRecord::day).min().unwrap();
    let available = (last - first + 1) as usize;
    if days > available {
        return Err(Error::InvalidArgument(format!(
            "window of {days} days exceeds the {available} days available"
        )));
    }
    let start = last - days as i64 + 1;
    Ok(dataset.iter().filter(|r| r.day() >= start).cloned().collect())
}

/// Records preceding the last `days` calendar days present in `dataset`;
/// the complement of [`last_days`]. With `days == 0` the whole dataset is
/// returned. At least one day must remain.
pub fn before_last_days(dataset: &[InteractionRecord], days: usize) -> Result<Vec<InteractionRecord>> {
    let (Some(first), Some(last)) = (
        dataset.iter().map(InteractionRecord::day).min(),
        dataset.iter().map(InteractionRecord::day).max(),
    ) else {
        return Err(Error::InvalidArgument("empty dataset".into()));
    };
    let available = (last - first + 1) as usize;
    if days >= available {
        return Err(Error::InvalidArgument(format!(
            "holding out {days} days leaves nothing of the {available} days available"
        )));
    }
    let end = last - days as i64;
    Ok(dataset.iter().filter(|r| r.day() <= end).cloned().collect())
}
