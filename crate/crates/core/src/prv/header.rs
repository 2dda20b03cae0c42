use std::fmt;

use chrono::{Datelike, Timelike};

use crate::model::{Application, Node, ProcessModel, ResourceModel, Task};

/// Wall-clock time the trace was captured, as shown in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CaptureTime {
    pub day: u8,
    pub month: u8,
    /// Written as two digits when below 100, else as four.
    pub year: u16,
    pub hour: u8,
    pub minute: u8,
}

impl CaptureTime {
    pub fn now() -> Self {
        let t = chrono::Local::now();
        CaptureTime {
            day: t.day() as u8,
            month: t.month() as u8,
            year: (t.year() % 100) as u16,
            hour: t.hour() as u8,
            minute: t.minute() as u8,
        }
    }
}

impl Default for CaptureTime {
    fn default() -> Self {
        CaptureTime {
            day: 1,
            month: 1,
            year: 0,
            hour: 0,
            minute: 0,
        }
    }
}

impl fmt::Display for CaptureTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}/{:02}/", self.day, self.month)?;
        if self.year < 100 {
            write!(f, "{:02}", self.year)?;
        } else {
            write!(f, "{:04}", self.year)?;
        }
        write!(f, " at {:02}:{:02}", self.hour, self.minute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub capture: CaptureTime,
    pub total_time: u64,
    pub resources: ResourceModel,
    pub process: ProcessModel,
}

pub fn format_header(h: &Header) -> String {
    use std::fmt::Write;
    let mut s = format!("#Paraver ({}):{}_ns:{}(", h.capture, h.total_time, h.resources.nodes.len());
    for (i, n) in h.resources.nodes.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{}", n.cpus).unwrap();
    }
    write!(s, "):{}", h.process.applications.len()).unwrap();
    for app in &h.process.applications {
        write!(s, ":{}(", app.tasks.len()).unwrap();
        for (i, t) in app.tasks.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{}:{}", t.threads, t.node).unwrap();
        }
        s.push(')');
    }
    s
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("expected unsigned integer for {what}, found {s:?}"));
    }
    s.parse()
        .map_err(|_| format!("{what} out of range: {s:?}"))
}

/// Splits on `sep` outside parentheses.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// `N(a,b,...)` → (N, "a,b,...")
fn counted_list<'a>(s: &'a str, what: &str) -> Result<(usize, &'a str), String> {
    let open = s
        .find('(')
        .ok_or_else(|| format!("missing '(' in {what} {s:?}"))?;
    if !s.ends_with(')') {
        return Err(format!("missing ')' in {what} {s:?}"));
    }
    let n: usize = num(&s[..open], what)?;
    Ok((n, &s[open + 1..s.len() - 1]))
}

fn parse_capture(s: &str) -> Result<CaptureTime, String> {
    let bad = || format!("malformed capture date {s:?}");
    let (date, time) = s.split_once(" at ").ok_or_else(bad)?;
    let d: Vec<&str> = date.split('/').collect();
    let t: Vec<&str> = time.split(':').collect();
    if d.len() != 3 || t.len() != 2 {
        return Err(bad());
    }
    Ok(CaptureTime {
        day: num(d[0], "day")?,
        month: num(d[1], "month")?,
        year: num(d[2], "year")?,
        hour: num(t[0], "hour")?,
        minute: num(t[1], "minute")?,
    })
}

pub fn parse_header(line: &str) -> Result<Header, String> {
    let rest = line
        .strip_prefix("#Paraver (")
        .ok_or_else(|| "header must start with \"#Paraver (\"".to_string())?;
    let close = rest
        .find(')')
        .ok_or_else(|| "unterminated capture date".to_string())?;
    let capture = parse_capture(&rest[..close])?;
    let rest = rest[close + 1..]
        .strip_prefix(':')
        .ok_or_else(|| "expected ':' after capture date".to_string())?;

    let fields = split_top(rest, ':');
    if fields.len() < 4 {
        return Err(format!("header has {} fields, expected at least 4", fields.len()));
    }
    let ftime = fields[0].strip_suffix("_ns").unwrap_or(fields[0]);
    let total_time: u64 = num(ftime, "trace duration")?;

    let (n_nodes, cpus) = counted_list(fields[1], "node list")?;
    let nodes = cpus
        .split(',')
        .map(|c| num(c, "cpu count").map(|cpus| Node { cpus }))
        .collect::<Result<Vec<_>, _>>()?;
    if nodes.len() != n_nodes {
        return Err(format!("{} nodes declared but {} cpu counts given", n_nodes, nodes.len()));
    }

    let n_apps: usize = num(fields[2], "application count")?;
    let app_fields = &fields[3..];
    if app_fields.len() != n_apps {
        return Err(format!(
            "{} applications declared but {} described",
            n_apps,
            app_fields.len()
        ));
    }
    let mut applications = Vec::with_capacity(n_apps);
    for f in app_fields {
        let (n_tasks, list) = counted_list(f, "application")?;
        let tasks = list
            .split(',')
            .map(|t| {
                let (threads, node) = t
                    .split_once(':')
                    .ok_or_else(|| format!("task entry {t:?} is not threads:node"))?;
                Ok(Task {
                    threads: num(threads, "thread count")?,
                    node: num(node, "node index")?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        if tasks.len() != n_tasks {
            return Err(format!("{} tasks declared but {} described", n_tasks, tasks.len()));
        }
        applications.push(Application { tasks });
    }

    Ok(Header {
        capture,
        total_time,
        resources: ResourceModel { nodes },
        process: ProcessModel { applications },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Header {
        Header {
            capture: CaptureTime {
                day: 1,
                month: 7,
                year: 24,
                hour: 12,
                minute: 5,
            },
            total_time: 1000,
            resources: ResourceModel {
                nodes: vec![Node { cpus: 4 }, Node { cpus: 2 }],
            },
            process: ProcessModel {
                applications: vec![
                    Application {
                        tasks: vec![Task { threads: 2, node: 1 }, Task { threads: 1, node: 2 }],
                    },
                    Application {
                        tasks: vec![Task { threads: 4, node: 1 }],
                    },
                ],
            },
        }
    }

    #[test]
    fn header_text() {
        assert_eq!(
            format_header(&header()),
            "#Paraver (01/07/24 at 12:05):1000_ns:2(4,2):2:2(2:1,1:2):1(4:1)"
        );
    }

    #[test]
    fn header_round_trip_and_variants() {
        let h = header();
        assert_eq!(parse_header(&format_header(&h)).unwrap(), h);
        let four = parse_header("#Paraver (16/10/2026 at 09:30):55:1(1):1:1(1:1)").unwrap();
        assert_eq!(four.capture.year, 2026);
        assert_eq!(four.total_time, 55);
        assert!(format_header(&four).starts_with("#Paraver (16/10/2026 at 09:30):55_ns"));
    }

    #[test]
    fn header_errors() {
        for bad in [
            "Paraver (01/07/24 at 12:05):1_ns:1(1):1:1(1:1)",
            "#Paraver (01/07/24 at 12:05):x_ns:1(1):1:1(1:1)",
            "#Paraver (01/07/24 at 12:05):1_ns:2(1):1:1(1:1)",
            "#Paraver (01/07/24 at 12:05):1_ns:1(1):2:1(1:1)",
            "#Paraver (01/07/24 at 12:05):1_ns:1(1):1:2(1:1)",
            "#Paraver (01/07/24 at 12:05):1_ns:1(1):1:1(1)",
            "#Paraver (01/07/24 12:05):1_ns:1(1):1:1(1:1)",
            "#Paraver (01/07/24 at 12:05):+1_ns:1(1):1:1(1:1)",
        ] {
            assert!(parse_header(bad).is_err(), "{bad}");
        }
    }
}
