//! Text tag files:
//!
//! ```text
//! #tagfile v1 rep_ps=<int> bin_ps=<int>
//! <channel>\t<timestamp_ps>\n
//! ```

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const CH_HERALD: u8 = 0;
pub const CH_D1: u8 = 1;
pub const CH_D2: u8 = 2;
pub const CH_SYNC: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagRecord {
    pub timestamp: u64,
    pub channel: u8,
}

impl TagRecord {
    pub fn new(channel: u8, timestamp: u64) -> Self {
        Self { timestamp, channel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagHeader {
    pub rep_ps: u64,
    pub bin_ps: u64,
}

impl TagHeader {
    pub fn line(&self) -> String {
        format!("#tagfile v1 rep_ps={} bin_ps={}", self.rep_ps, self.bin_ps)
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse { offset: 0, msg: format!("header: {msg}") };
        let mut parts = line.split(' ');
        if parts.next() != Some("#tagfile") || parts.next() != Some("v1") {
            return Err(bad("expected `#tagfile v1`"));
        }
        let mut rep = None;
        let mut bin = None;
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let v: u64 = v.parse().map_err(|_| bad(&format!("`{k}` is not an integer")))?;
            match k {
                "rep_ps" => rep = Some(v),
                "bin_ps" => bin = Some(v),
                _ => return Err(bad(&format!("unknown field `{k}`"))),
            }
        }
        match (rep, bin) {
            (Some(rep_ps), Some(bin_ps)) if rep_ps > 0 && bin_ps > 0 => Ok(Self { rep_ps, bin_ps }),
            _ => Err(bad("rep_ps and bin_ps must both be present and positive")),
        }
    }
}

/// Write a header and all records. Returns the number of records written.
pub fn write_tags<W: Write>(
    records: impl IntoIterator<Item = TagRecord>,
    header: TagHeader,
    sink: W,
) -> Result<u64> {
    let mut w = std::io::BufWriter::with_capacity(1 << 16, sink);
    writeln!(w, "{}", header.line())?;
    let mut n = 0u64;
    let mut buf = [0u8; 32];
    for r in records {
        if r.channel > CH_SYNC {
            return Err(Error::Invalid(format!("channel {} out of range", r.channel)));
        }
        let len = format_record(r, &mut buf);
        w.write_all(&buf[..len])?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

fn format_record(r: TagRecord, buf: &mut [u8; 32]) -> usize {
    buf[0] = b'0' + r.channel;
    buf[1] = b'\t';
    let mut digits = [0u8; 20];
    let mut v = r.timestamp;
    let mut k = 0;
    loop {
        digits[k] = b'0' + (v % 10) as u8;
        v /= 10;
        k += 1;
        if v == 0 {
            break;
        }
    }
    for i in 0..k {
        buf[2 + i] = digits[k - 1 - i];
    }
    buf[2 + k] = b'\n';
    3 + k
}

/// Streaming reader; holds one line in memory at a time.
pub struct TagReader<R: BufRead> {
    src: R,
    header: TagHeader,
    offset: u64,
    line: Vec<u8>,
    last: Option<u64>,
    non_monotone: u64,
    done: bool,
}

/// Open a tag stream: parses the header line.
pub fn read_tags<R: BufRead>(mut src: R) -> Result<TagReader<R>> {
    let mut first = Vec::new();
    let n = src.read_until(b'\n', &mut first)?;
    if n == 0 || first.last() != Some(&b'\n') {
        return Err(Error::Parse { offset: 0, msg: "missing header line".into() });
    }
    let text = std::str::from_utf8(&first[..n - 1])
        .map_err(|_| Error::Parse { offset: 0, msg: "header is not UTF-8".into() })?;
    let header = TagHeader::parse(text.trim_end_matches('\r'))?;
    Ok(TagReader {
        src,
        header,
        offset: n as u64,
        line: Vec::with_capacity(32),
        last: None,
        non_monotone: 0,
        done: false,
    })
}

impl<R: BufRead> TagReader<R> {
    pub fn header(&self) -> TagHeader {
        self.header
    }

    /// Records whose timestamp was smaller than their predecessor's.
    pub fn non_monotone_count(&self) -> u64 {
        self.non_monotone
    }

    fn parse_line(&self, start: u64) -> Result<TagRecord> {
        let err = |msg: String| Error::Parse { offset: start, msg };
        let body = &self.line[..self.line.len() - 1];
        let tab = body.iter().position(|&b| b == b'\t').ok_or_else(|| err("missing TAB".into()))?;
        let (ch, ts) = (&body[..tab], &body[tab + 1..]);
        if ch.len() != 1 || !(b'0'..=b'3').contains(&ch[0]) {
            return Err(err(format!("bad channel `{}`", String::from_utf8_lossy(ch))));
        }
        if ts.is_empty() || ts.len() > 20 {
            return Err(err("bad timestamp".into()));
        }
        let mut v: u64 = 0;
        for &b in ts {
            if !b.is_ascii_digit() {
                return Err(err(format!("bad timestamp `{}`", String::from_utf8_lossy(ts))));
            }
            v = v
                .checked_mul(10)
                .and_then(|x| x.checked_add((b - b'0') as u64))
                .ok_or_else(|| err("timestamp overflows 64 bits".into()))?;
        }
        Ok(TagRecord { timestamp: v, channel: ch[0] - b'0' })
    }
}

impl<R: BufRead> Iterator for TagReader<R> {
    type Item = Result<TagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.line.clear();
        let start = self.offset;
        let n = match self.src.read_until(b'\n', &mut self.line) {
            Ok(n) => n,
            Err(e) => {
                self.done = true;
                return Some(Err(e.into()));
            }
        };
        if n == 0 {
            self.done = true;
            return None;
        }
        self.offset += n as u64;
        if self.line.last() != Some(&b'\n') {
            self.done = true;
            return Some(Err(Error::Parse {
                offset: start,
                msg: "truncated final record (no newline)".into(),
            }));
        }
        match self.parse_line(start) {
            Ok(r) => {
                if let Some(p) = self.last {
                    if r.timestamp < p {
                        self.non_monotone += 1;
                    }
                }
                self.last = Some(r.timestamp);
                Some(Ok(r))
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: TagHeader = TagHeader { rep_ps: 12200, bin_ps: 128 };

    #[test]
    fn round_trip() {
        let recs: Vec<TagRecord> =
            (0..1000u64).map(|i| TagRecord::new((i % 4) as u8, i * 128 + u64::MAX / 2 * (i % 2))).collect();
        let mut buf = Vec::new();
        write_tags(recs.iter().copied(), H, &mut buf).unwrap();
        let r = read_tags(&buf[..]).unwrap();
        assert_eq!(r.header(), H);
        let back: Vec<TagRecord> = r.map(|x| x.unwrap()).collect();
        assert_eq!(back, recs);
    }

    #[test]
    fn exact_bytes() {
        let mut buf = Vec::new();
        write_tags([TagRecord::new(0, 0), TagRecord::new(3, 12288)], H, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "#tagfile v1 rep_ps=12200 bin_ps=128\n0\t0\n3\t12288\n");
    }

    #[test]
    fn truncated_record_reports_offset() {
        let data = b"#tagfile v1 rep_ps=12200 bin_ps=128\n0\t128\n1\t25";
        let out: Vec<_> = read_tags(&data[..]).unwrap().collect();
        assert!(out[0].is_ok());
        match &out[1] {
            Err(Error::Parse { offset, .. }) => assert_eq!(*offset, 42),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_channel() {
        let data = b"#tagfile v1 rep_ps=12200 bin_ps=128\n7\t128\n";
        let out: Vec<_> = read_tags(&data[..]).unwrap().collect();
        assert!(matches!(out[0], Err(Error::Parse { offset: 36, .. })));
    }

    #[test]
    fn empty_body() {
        let data = b"#tagfile v1 rep_ps=12200 bin_ps=128\n";
        assert_eq!(read_tags(&data[..]).unwrap().count(), 0);
        assert!(read_tags(&b""[..]).is_err());
        assert!(read_tags(&b"#tagfile v2 rep_ps=1 bin_ps=1\n"[..]).is_err());
    }

    #[test]
    fn counts_non_monotone() {
        let data = b"#tagfile v1 rep_ps=12200 bin_ps=128\n0\t256\n1\t128\n2\t384\n1\t0\n";
        let mut r = read_tags(&data[..]).unwrap();
        let n = r.by_ref().filter(|x| x.is_ok()).count();
        assert_eq!(n, 4);
        assert_eq!(r.non_monotone_count(), 2);
    }
}
