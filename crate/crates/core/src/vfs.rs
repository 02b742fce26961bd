//! In-memory filesystem used in place of the host filesystem while grading.
//!
//! The tree is a plain recursive structure. Handles are byte offsets into
//! files held in the tree. Fault rules let a test make the N-th open, read,
//! write or close of a path fail, and every operation is appended to a log so
//! the final tree can be reproduced from the initial snapshot.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    File(Vec<u8>),
    Dir(BTreeMap<String, Node>),
}

impl Node {
    pub fn empty_dir() -> Node {
        Node::Dir(BTreeMap::new())
    }

    /// Convenience constructor for tests and fixtures: `[("a.txt", "hi")]`.
    pub fn with_files<'a>(files: impl IntoIterator<Item = (&'a str, &'a str)>) -> Node {
        let mut root = Node::empty_dir();
        for (path, content) in files {
            let mut node = &mut root;
            let parts: Vec<&str> = path.trim_start_matches('/').split('/').collect();
            for (i, part) in parts.iter().enumerate() {
                let Node::Dir(children) = node else { break };
                if i + 1 == parts.len() {
                    children.insert(part.to_string(), Node::File(content.as_bytes().to_vec()));
                    break;
                }
                node = children.entry(part.to_string()).or_insert_with(Node::empty_dir);
            }
        }
        root
    }

    /// All files below this node as `(absolute path, content)`, sorted by path.
    pub fn files(&self) -> BTreeMap<String, Vec<u8>> {
        fn walk(node: &Node, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
            match node {
                Node::File(c) => {
                    out.insert(prefix.to_string(), c.clone());
                }
                Node::Dir(children) => {
                    for (name, child) in children {
                        walk(child, &format!("{prefix}/{name}"), out);
                    }
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(self, "", &mut out);
        out
    }

    fn lookup(&self, parts: &[&str]) -> Option<&Node> {
        let mut node = self;
        for part in parts {
            match node {
                Node::Dir(children) => node = children.get(*part)?,
                Node::File(_) => return None,
            }
        }
        Some(node)
    }

    fn lookup_mut(&mut self, parts: &[&str]) -> Option<&mut Node> {
        let mut node = self;
        for part in parts {
            match node {
                Node::Dir(children) => node = children.get_mut(*part)?,
                Node::File(_) => return None,
            }
        }
        Some(node)
    }
}

/// JSON form of a tree: `{"dirs": {name: tree}, "files": {name: text}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeJson {
    #[serde(default)]
    pub dirs: BTreeMap<String, TreeJson>,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl TreeJson {
    pub fn to_node(&self) -> Result<Node, VfsError> {
        let mut children = BTreeMap::new();
        for (name, sub) in &self.dirs {
            check_child_name(name)?;
            children.insert(name.clone(), sub.to_node()?);
        }
        for (name, content) in &self.files {
            check_child_name(name)?;
            if children.contains_key(name) {
                return Err(VfsError::InvalidPath(format!("{name} is both a file and a directory")));
            }
            children.insert(name.clone(), Node::File(content.as_bytes().to_vec()));
        }
        Ok(Node::Dir(children))
    }

    pub fn from_node(node: &Node) -> TreeJson {
        let mut out = TreeJson::default();
        if let Node::Dir(children) = node {
            for (name, child) in children {
                match child {
                    Node::Dir(_) => {
                        out.dirs.insert(name.clone(), TreeJson::from_node(child));
                    }
                    Node::File(c) => {
                        out.files.insert(name.clone(), String::from_utf8_lossy(c).into_owned());
                    }
                }
            }
        }
        out
    }
}

fn check_child_name(name: &str) -> Result<(), VfsError> {
    if name.is_empty() || name.contains('/') || name == "." || name == ".." {
        return Err(VfsError::InvalidPath(format!("invalid file name {name:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handle {
    pub id: u64,
    pub path: String,
    pub mode: Mode,
    pub position: usize,
    pub open: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultOp {
    Open,
    #[serde(rename = "read")]
    ReadOp,
    #[serde(rename = "write")]
    WriteOp,
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub path: String,
    pub op: FaultOp,
    /// Fires on the countdown-th matching operation (1 = the first one).
    pub countdown: u32,
    #[serde(default = "default_fault_message")]
    pub message: String,
    #[serde(skip)]
    pub fired: bool,
    #[serde(skip)]
    pub seen: u32,
}

fn default_fault_message() -> String {
    "injected fault".to_string()
}

impl FaultRule {
    pub fn new(path: &str, op: FaultOp, countdown: u32, message: &str) -> FaultRule {
        FaultRule { path: path.into(), op, countdown: countdown.max(1), message: message.into(), fired: false, seen: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VfsError {
    #[error("{0}: no such file or directory")]
    NotFound(String),
    #[error("{0}: is a directory")]
    IsDirectory(String),
    #[error("{0}: already open for writing")]
    AlreadyWriteOpen(String),
    #[error("operation on a closed handle")]
    ClosedHandle,
    #[error("bad file descriptor")]
    NoSuchHandle,
    #[error("handle not opened in the required mode")]
    WrongMode,
    #[error("end of file")]
    EndOfFile,
    #[error("{0}")]
    InjectedFault(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogOp {
    Open(Mode),
    ReadLine,
    Write(Vec<u8>),
    Close,
}

impl fmt::Display for LogOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogOp::Open(Mode::Read) => write!(f, "open_read"),
            LogOp::Open(Mode::Write) => write!(f, "open_write"),
            LogOp::ReadLine => write!(f, "read_line"),
            LogOp::Write(b) => write!(f, "write({} bytes)", b.len()),
            LogOp::Close => write!(f, "close"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub op: LogOp,
    pub path: String,
    pub handle: Option<u64>,
    pub step: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InspectionReport {
    pub created: Vec<String>,
    pub modified: Vec<String>,
    pub deleted: Vec<String>,
    pub open_handles: Vec<(u64, String)>,
    pub op_log: Vec<LogEntry>,
}

impl InspectionReport {
    pub fn is_clean(&self) -> bool {
        self.created.is_empty() && self.modified.is_empty() && self.deleted.is_empty() && self.open_handles.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct VfsState {
    pub root: Node,
    pub handles: BTreeMap<u64, Handle>,
    pub next_id: u64,
    pub faults: Vec<FaultRule>,
    pub log: Vec<LogEntry>,
    pub snapshot: Option<Node>,
    clock: u64,
}

impl Default for VfsState {
    fn default() -> Self {
        VfsState::reset(Node::empty_dir())
    }
}

/// Splits an absolute, normalised path into components.
pub fn split_path(path: &str) -> Result<Vec<&str>, VfsError> {
    let Some(rest) = path.strip_prefix('/') else {
        return Err(VfsError::InvalidPath(path.to_string()));
    };
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = rest.split('/').collect();
    if parts.iter().any(|p| p.is_empty() || *p == "." || *p == "..") {
        return Err(VfsError::InvalidPath(path.to_string()));
    }
    Ok(parts)
}

impl VfsState {
    /// Fresh state over a deep copy of `initial`.
    pub fn reset(initial: Node) -> VfsState {
        let root = match initial {
            Node::Dir(_) => initial,
            Node::File(_) => Node::empty_dir(),
        };
        VfsState {
            snapshot: Some(root.clone()),
            root,
            handles: BTreeMap::new(),
            next_id: 1,
            faults: Vec::new(),
            log: Vec::new(),
            clock: 0,
        }
    }

    pub fn add_fault(&mut self, rule: FaultRule) {
        self.faults.push(rule);
    }

    /// Sets the step index recorded with subsequent log entries.
    pub fn set_clock(&mut self, step: u64) {
        self.clock = step;
    }

    fn log(&mut self, op: LogOp, path: &str, handle: Option<u64>, ok: bool) {
        self.log.push(LogEntry { op, path: path.to_string(), handle, step: self.clock, ok });
    }

    fn check_fault(&mut self, path: &str, op: FaultOp) -> Result<(), VfsError> {
        for rule in &mut self.faults {
            if rule.fired || rule.op != op || rule.path != path {
                continue;
            }
            rule.seen += 1;
            if rule.seen >= rule.countdown {
                rule.fired = true;
                return Err(VfsError::InjectedFault(rule.message.clone()));
            }
        }
        Ok(())
    }

    pub fn read_file(&self, path: &str) -> Result<&[u8], VfsError> {
        let parts = split_path(path)?;
        match self.root.lookup(&parts) {
            Some(Node::File(c)) => Ok(c),
            Some(Node::Dir(_)) => Err(VfsError::IsDirectory(path.into())),
            None => Err(VfsError::NotFound(path.into())),
        }
    }

    pub fn open(&mut self, path: &str, mode: Mode) -> Result<u64, VfsError> {
        let r = self.open_inner(path, mode);
        self.log(LogOp::Open(mode), path, r.as_ref().ok().copied(), r.is_ok());
        r
    }

    fn open_inner(&mut self, path: &str, mode: Mode) -> Result<u64, VfsError> {
        let parts = split_path(path)?;
        self.check_fault(path, FaultOp::Open)?;
        let Some((name, parent_parts)) = parts.split_last() else {
            return Err(VfsError::IsDirectory(path.into()));
        };
        match mode {
            Mode::Read => match self.root.lookup(&parts) {
                Some(Node::File(_)) => {}
                Some(Node::Dir(_)) => return Err(VfsError::IsDirectory(path.into())),
                None => return Err(VfsError::NotFound(path.into())),
            },
            Mode::Write => {
                if self.handles.values().any(|h| h.open && h.mode == Mode::Write && h.path == path) {
                    return Err(VfsError::AlreadyWriteOpen(path.into()));
                }
                let Some(Node::Dir(children)) = self.root.lookup_mut(parent_parts) else {
                    return Err(VfsError::NotFound(path.into()));
                };
                match children.get_mut(*name) {
                    Some(Node::Dir(_)) => return Err(VfsError::IsDirectory(path.into())),
                    Some(Node::File(content)) => content.clear(),
                    None => {
                        children.insert(name.to_string(), Node::File(Vec::new()));
                    }
                }
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.handles.insert(id, Handle { id, path: path.to_string(), mode, position: 0, open: true });
        Ok(id)
    }

    fn handle(&self, id: u64, mode: Mode) -> Result<&Handle, VfsError> {
        let h = self.handles.get(&id).ok_or(VfsError::NoSuchHandle)?;
        if !h.open {
            return Err(VfsError::ClosedHandle);
        }
        if h.mode != mode {
            return Err(VfsError::WrongMode);
        }
        Ok(h)
    }

    fn handle_path(&self, id: u64) -> String {
        self.handles.get(&id).map(|h| h.path.clone()).unwrap_or_default()
    }

    /// Returns the bytes up to the next newline, consuming the newline.
    pub fn read_line(&mut self, id: u64) -> Result<Vec<u8>, VfsError> {
        let r = self.read_line_inner(id);
        let path = self.handle_path(id);
        self.log(LogOp::ReadLine, &path, Some(id), r.is_ok());
        r
    }

    fn read_line_inner(&mut self, id: u64) -> Result<Vec<u8>, VfsError> {
        let h = self.handle(id, Mode::Read)?;
        let (path, pos) = (h.path.clone(), h.position);
        self.check_fault(&path, FaultOp::ReadOp)?;
        let content = self.read_file(&path)?;
        let pos = pos.min(content.len());
        if pos >= content.len() {
            return Err(VfsError::EndOfFile);
        }
        let rest = &content[pos..];
        let (line, consumed) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (rest[..i].to_vec(), i + 1),
            None => (rest.to_vec(), rest.len()),
        };
        if let Some(h) = self.handles.get_mut(&id) {
            h.position = pos + consumed;
        }
        Ok(line)
    }

    pub fn write(&mut self, id: u64, bytes: &[u8]) -> Result<(), VfsError> {
        let r = self.write_inner(id, bytes);
        let path = self.handle_path(id);
        self.log(LogOp::Write(bytes.to_vec()), &path, Some(id), r.is_ok());
        r
    }

    fn write_inner(&mut self, id: u64, bytes: &[u8]) -> Result<(), VfsError> {
        let h = self.handle(id, Mode::Write)?;
        let (path, pos) = (h.path.clone(), h.position);
        self.check_fault(&path, FaultOp::WriteOp)?;
        let parts = split_path(&path)?;
        let Some(Node::File(content)) = self.root.lookup_mut(&parts) else {
            return Err(VfsError::NotFound(path));
        };
        let pos = pos.min(content.len());
        content.truncate(pos);
        content.extend_from_slice(bytes);
        let new_pos = content.len();
        if let Some(h) = self.handles.get_mut(&id) {
            h.position = new_pos;
        }
        Ok(())
    }

    pub fn close(&mut self, id: u64) -> Result<(), VfsError> {
        let r = self.close_inner(id);
        let path = self.handle_path(id);
        self.log(LogOp::Close, &path, Some(id), r.is_ok());
        r
    }

    fn close_inner(&mut self, id: u64) -> Result<(), VfsError> {
        let h = self.handles.get(&id).ok_or(VfsError::NoSuchHandle)?;
        if !h.open {
            return Err(VfsError::ClosedHandle);
        }
        let path = h.path.clone();
        self.check_fault(&path, FaultOp::Close)?;
        if let Some(h) = self.handles.get_mut(&id) {
            h.open = false;
        }
        Ok(())
    }

    /// Diff of the snapshot against the current tree, plus leaked handles.
    pub fn inspect(&self) -> InspectionReport {
        let before = self.snapshot.as_ref().map(Node::files).unwrap_or_default();
        let after = self.root.files();
        let created = after.keys().filter(|p| !before.contains_key(*p)).cloned().collect();
        let deleted = before.keys().filter(|p| !after.contains_key(*p)).cloned().collect();
        let modified =
            after.iter().filter(|(p, c)| before.get(*p).is_some_and(|old| old != *c)).map(|(p, _)| p.clone()).collect();
        let open_handles = self.handles.values().filter(|h| h.open).map(|h| (h.id, h.path.clone())).collect();
        InspectionReport { created, modified, deleted, open_handles, op_log: self.log.clone() }
    }
}

/// Re-applies the successful operations of `log` to `snapshot`.
pub fn replay(snapshot: &Node, log: &[LogEntry]) -> Result<Node, VfsError> {
    let mut state = VfsState::reset(snapshot.clone());
    let mut ids = BTreeMap::new();
    for entry in log.iter().filter(|e| e.ok) {
        match &entry.op {
            LogOp::Open(mode) => {
                let id = state.open(&entry.path, *mode)?;
                if let Some(orig) = entry.handle {
                    ids.insert(orig, id);
                }
            }
            LogOp::ReadLine => {
                let id = entry.handle.and_then(|h| ids.get(&h)).copied().ok_or(VfsError::NoSuchHandle)?;
                state.read_line(id)?;
            }
            LogOp::Write(bytes) => {
                let id = entry.handle.and_then(|h| ids.get(&h)).copied().ok_or(VfsError::NoSuchHandle)?;
                state.write(id, bytes)?;
            }
            LogOp::Close => {
                let id = entry.handle.and_then(|h| ids.get(&h)).copied().ok_or(VfsError::NoSuchHandle)?;
                state.close(id)?;
            }
        }
    }
    Ok(state.root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(files: &[(&str, &str)]) -> VfsState {
        VfsState::reset(Node::with_files(files.iter().copied()))
    }

    #[test]
    fn reset_empty_dir() {
        let s = VfsState::reset(Node::empty_dir());
        assert_eq!(s.root, Node::empty_dir());
        assert!(s.handles.is_empty() && s.log.is_empty());
    }

    #[test]
    fn reset_then_read() {
        let mut s = state_with(&[("a.txt", "hi")]);
        let h = s.open("/a.txt", Mode::Read).unwrap();
        assert_eq!(s.read_line(h).unwrap(), b"hi");
    }

    #[test]
    fn reset_twice_gives_independent_states() {
        let init = Node::with_files([("a.txt", "hi")]);
        let mut a = VfsState::reset(init.clone());
        let b = VfsState::reset(init.clone());
        let h = a.open("/a.txt", Mode::Write).unwrap();
        a.write(h, b"changed").unwrap();
        assert_eq!(b.read_file("/a.txt").unwrap(), b"hi");
        assert_eq!(b.root, init);
    }

    #[test]
    fn open_errors() {
        let mut s = state_with(&[("d/x", "1")]);
        assert_eq!(s.open("/missing", Mode::Read), Err(VfsError::NotFound("/missing".into())));
        assert_eq!(s.open("/d", Mode::Read), Err(VfsError::IsDirectory("/d".into())));
        assert_eq!(s.open("/nodir/f", Mode::Write), Err(VfsError::NotFound("/nodir/f".into())));
        assert!(matches!(s.open("relative", Mode::Read), Err(VfsError::InvalidPath(_))));
        assert!(matches!(s.open("/d/../x", Mode::Read), Err(VfsError::InvalidPath(_))));
        s.open("/d/y", Mode::Write).unwrap();
        assert_eq!(s.open("/d/y", Mode::Write), Err(VfsError::AlreadyWriteOpen("/d/y".into())));
    }

    #[test]
    fn open_write_creates_empty_file() {
        let mut s = state_with(&[]);
        s.open("/out.txt", Mode::Write).unwrap();
        assert_eq!(s.read_file("/out.txt").unwrap(), b"");
        assert_eq!(s.inspect().created, vec!["/out.txt".to_string()]);
    }

    #[test]
    fn open_write_truncates() {
        let mut s = state_with(&[("a", "old")]);
        s.open("/a", Mode::Write).unwrap();
        assert_eq!(s.read_file("/a").unwrap(), b"");
    }

    #[test]
    fn injected_open_fault() {
        let mut s = state_with(&[("a.txt", "x")]);
        s.add_fault(FaultRule::new("/a.txt", FaultOp::Open, 1, "boom"));
        assert_eq!(s.open("/a.txt", Mode::Read), Err(VfsError::InjectedFault("boom".into())));
        // fires at most once
        assert!(s.open("/a.txt", Mode::Read).is_ok());
    }

    #[test]
    fn read_lines_until_eof() {
        // byte walk over "a\nb": [a][\n][b] -> "a", "b", then end of file
        let mut s = state_with(&[("f", "a\nb")]);
        let h = s.open("/f", Mode::Read).unwrap();
        assert_eq!(s.read_line(h).unwrap(), b"a");
        assert_eq!(s.read_line(h).unwrap(), b"b");
        assert_eq!(s.read_line(h), Err(VfsError::EndOfFile));
    }

    #[test]
    fn writes_append_at_position() {
        let mut s = state_with(&[]);
        let h = s.open("/o", Mode::Write).unwrap();
        s.write(h, b"x").unwrap();
        s.write(h, b"x").unwrap();
        assert_eq!(s.read_file("/o").unwrap(), b"xx");
    }

    #[test]
    fn read_fault_on_second_read() {
        let mut s = state_with(&[("f", "1\n2\n3\n")]);
        s.add_fault(FaultRule::new("/f", FaultOp::ReadOp, 2, "disk"));
        let h = s.open("/f", Mode::Read).unwrap();
        assert_eq!(s.read_line(h).unwrap(), b"1");
        assert_eq!(s.read_line(h), Err(VfsError::InjectedFault("disk".into())));
        // the faulted read consumed nothing
        assert_eq!(s.read_line(h).unwrap(), b"2");
    }

    #[test]
    fn handle_errors() {
        let mut s = state_with(&[("f", "1")]);
        let h = s.open("/f", Mode::Read).unwrap();
        assert_eq!(s.write(h, b"x"), Err(VfsError::WrongMode));
        s.close(h).unwrap();
        assert_eq!(s.close(h), Err(VfsError::ClosedHandle));
        assert_eq!(s.read_line(h), Err(VfsError::ClosedHandle));
        assert_eq!(s.read_line(99), Err(VfsError::NoSuchHandle));
    }

    #[test]
    fn inspect_without_operations_is_clean() {
        let s = state_with(&[("a", "1")]);
        assert!(s.inspect().is_clean());
        assert!(s.inspect().op_log.is_empty());
    }

    #[test]
    fn inspect_reports_leak_and_creation() {
        let mut s = state_with(&[]);
        let h = s.open("/b.txt", Mode::Write).unwrap();
        s.write(h, b"hi").unwrap();
        let r = s.inspect();
        assert_eq!(r.created, vec!["/b.txt".to_string()]);
        assert_eq!(r.open_handles, vec![(h, "/b.txt".to_string())]);
        assert_eq!(r.op_log.len(), 2);
        // replay oracle over the log reproduces the tree
        assert_eq!(replay(s.snapshot.as_ref().unwrap(), &r.op_log).unwrap(), s.root);
    }

    #[test]
    fn modified_and_unchanged_files() {
        let mut s = state_with(&[("a", "1"), ("b", "2")]);
        let h = s.open("/a", Mode::Write).unwrap();
        s.write(h, b"9").unwrap();
        let h = s.open("/b", Mode::Write).unwrap();
        s.write(h, b"2").unwrap();
        let r = s.inspect();
        assert_eq!(r.modified, vec!["/a".to_string()]);
        assert!(r.created.is_empty());
    }

    #[test]
    fn tree_json_round_trip() {
        let json = r#"{"dirs":{"logs":{"dirs":{},"files":{}}},"files":{"a.txt":"hi\n"}}"#;
        let tree: TreeJson = serde_json::from_str(json).unwrap();
        let node = tree.to_node().unwrap();
        assert_eq!(node.files().get("/a.txt").unwrap(), b"hi\n");
        assert_eq!(serde_json::to_string(&TreeJson::from_node(&node)).unwrap(), json);
    }
}
