//! Hand-rolled string recognizers used by schema inference and cleaning.

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn digits_in_range(s: &str, len: usize, lo: u32, hi: u32) -> bool {
    if s.len() != len || !all_digits(s) {
        return false;
    }
    let v: u32 = s.parse().unwrap_or(u32::MAX);
    (lo..=hi).contains(&v)
}

/// `HH:MM`, `HH:MM:SS` or `HH:MM:SS.fff`, optionally followed by `Z` or a
/// `+HH:MM` / `-HH:MM` offset.
fn is_time(s: &str) -> bool {
    let s = s.strip_suffix('Z').unwrap_or(s);
    let (clock, offset) = match s.len().checked_sub(6) {
        Some(at)
            if at >= 5
                && s.is_char_boundary(at)
                && matches!(s.as_bytes()[at], b'+' | b'-') =>
        {
            (&s[..at], Some(&s[at + 1..]))
        }
        _ => (s, None),
    };
    if let Some(off) = offset {
        let mut p = off.split(':');
        let ok = matches!((p.next(), p.next(), p.next()), (Some(h), Some(m), None)
            if digits_in_range(h, 2, 0, 23) && digits_in_range(m, 2, 0, 59));
        if !ok {
            return false;
        }
    }
    let (hms, frac) = match clock.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (clock, None),
    };
    if let Some(f) = frac {
        if !all_digits(f) {
            return false;
        }
    }
    let parts: alloc::vec::Vec<&str> = hms.split(':').collect();
    match parts.as_slice() {
        [h, m] => frac.is_none() && digits_in_range(h, 2, 0, 23) && digits_in_range(m, 2, 0, 59),
        [h, m, sec] => {
            digits_in_range(h, 2, 0, 23) && digits_in_range(m, 2, 0, 59) && digits_in_range(sec, 2, 0, 60)
        }
        _ => false,
    }
}

/// ISO-8601 `YYYY-MM-DD`, optionally followed by `T` or a space and a time.
pub(crate) fn is_iso_date(s: &str) -> bool {
    let (date, time) = if s.len() > 10 && s.is_char_boundary(10) {
        let (d, rest) = s.split_at(10);
        match rest.as_bytes()[0] {
            b'T' | b' ' => (d, Some(&rest[1..])),
            _ => return false,
        }
    } else {
        (s, None)
    };
    let mut p = date.split('-');
    let date_ok = matches!((p.next(), p.next(), p.next(), p.next()), (Some(y), Some(m), Some(d), None)
        if digits_in_range(y, 4, 1000, 2999) && digits_in_range(m, 2, 1, 12) && digits_in_range(d, 2, 1, 31));
    date_ok && time.map_or(true, is_time)
}

/// `MM/DD/YYYY` with one- or two-digit month and day.
pub(crate) fn is_us_date(s: &str) -> bool {
    let mut p = s.split('/');
    matches!((p.next(), p.next(), p.next(), p.next()), (Some(m), Some(d), Some(y), None)
        if (1..=2).contains(&m.len()) && all_digits(m) && (1..=12).contains(&m.parse::<u32>().unwrap_or(0))
            && (1..=2).contains(&d.len()) && all_digits(d) && (1..=31).contains(&d.parse::<u32>().unwrap_or(0))
            && digits_in_range(y, 4, 1000, 2999))
}

/// `DD-MM-YYYY` with one- or two-digit day and month.
pub(crate) fn is_dmy_date(s: &str) -> bool {
    let mut p = s.split('-');
    matches!((p.next(), p.next(), p.next(), p.next()), (Some(d), Some(m), Some(y), None)
        if (1..=2).contains(&d.len()) && all_digits(d) && (1..=31).contains(&d.parse::<u32>().unwrap_or(0))
            && (1..=2).contains(&m.len()) && all_digits(m) && (1..=12).contains(&m.parse::<u32>().unwrap_or(0))
            && digits_in_range(y, 4, 1000, 2999))
}

pub(crate) fn is_date_like(s: &str) -> bool {
    let s = s.trim();
    is_iso_date(s) || is_us_date(s) || is_dmy_date(s)
}

pub(crate) fn is_url(s: &str) -> bool {
    let lower = s.trim().to_ascii_lowercase();
    ["http://", "https://", "ftp://", "www.", "s3://", "file://"]
        .iter()
        .any(|p| lower.starts_with(p))
}

const FILE_EXTENSIONS: &[&str] = &[
    "jpg", "jpeg", "png", "gif", "bmp", "tif", "tiff", "wav", "mp3", "mp4", "txt", "csv",
    "json", "xml", "pdf", "npy", "dcm", "svg", "webp",
];

pub(crate) fn is_path(s: &str) -> bool {
    let s = s.trim();
    if s.contains(' ') && !s.contains('/') && !s.contains('\\') {
        return false;
    }
    let rooted = s.starts_with('/')
        || s.starts_with("./")
        || s.starts_with("../")
        || s.starts_with("~/")
        || (s.len() > 2 && s.as_bytes()[1] == b':' && matches!(s.as_bytes()[2], b'\\' | b'/'));
    let has_sep = s.contains('/') || s.contains('\\');
    let ext = s
        .rsplit_once('.')
        .map(|(_, e)| FILE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false);
    rooted || (has_sep && ext) || (ext && !s.contains(' '))
}

/// Phone-number shaped: 7 to 15 digits, at least one separator from
/// `+-() .`, nothing else, and not a date.
pub(crate) fn is_phone(s: &str) -> bool {
    let s = s.trim();
    if is_date_like(s) {
        return false;
    }
    let mut digits = 0;
    let mut seps = 0;
    for c in s.chars() {
        match c {
            '0'..='9' => digits += 1,
            '+' | '-' | '(' | ')' | ' ' | '.' => seps += 1,
            _ => return false,
        }
    }
    // A single '.' or leading '-' is a plain number, not a phone.
    let numeric_like = s.parse::<f64>().is_ok();
    (7..=15).contains(&digits) && seps >= 1 && !numeric_like
}

/// `/(^|_)id$/i`
pub(crate) fn is_id_name(name: &str) -> bool {
    let lower = name.trim().to_ascii_lowercase();
    match lower.strip_suffix("id") {
        Some("") => true,
        Some(prefix) => prefix.ends_with('_'),
        None => false,
    }
}

/// `/date|time|stamp/i`
pub(crate) fn is_time_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.contains("date") || lower.contains("time") || lower.contains("stamp")
}
