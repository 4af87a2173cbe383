//! Markdown code fences: safe wrapping and block extraction.

/// A fenced block found in a model reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    /// First word of the info string, if any.
    pub tag: Option<String>,
    pub content: String,
}

fn longest_backtick_run(text: &str) -> usize {
    let mut best = 0;
    let mut run = 0;
    for c in text.chars() {
        if c == '`' {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Wraps `text` in a backtick fence longer than any backtick run inside
/// it, so that [`fenced_blocks`] recovers `text` exactly.
pub fn fence(text: &str, tag: &str) -> String {
    let fence = "`".repeat((longest_backtick_run(text) + 1).max(3));
    format!("{fence}{tag}\n{text}\n{fence}")
}

struct Opening {
    ch: char,
    len: usize,
    tag: Option<String>,
}

fn strip_indent(line: &str) -> Option<&str> {
    let trimmed = line.trim_start_matches(' ');
    (line.len() - trimmed.len() <= 3).then_some(trimmed)
}

fn parse_opening(line: &str) -> Option<Opening> {
    let line = strip_indent(line.strip_suffix('\r').unwrap_or(line))?;
    let ch = line.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = line.chars().take_while(|c| *c == ch).count();
    if len < 3 {
        return None;
    }
    let info = line[len..].trim();
    if ch == '`' && info.contains('`') {
        return None;
    }
    let tag = info.split_whitespace().next().map(|t| t.to_string());
    Some(Opening { ch, len, tag })
}

fn is_closing(line: &str, open: &Opening) -> bool {
    let Some(line) = strip_indent(line.strip_suffix('\r').unwrap_or(line)) else {
        return false;
    };
    let len = line.chars().take_while(|c| *c == open.ch).count();
    len >= open.len && line[len..].trim().is_empty()
}

/// All top-level fenced blocks in document order. An unclosed fence runs
/// to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut blocks = Vec::new();
    let mut lines = text.split('\n');
    while let Some(line) = lines.next() {
        let Some(open) = parse_opening(line) else {
            continue;
        };
        let mut body: Vec<&str> = Vec::new();
        for inner in lines.by_ref() {
            if is_closing(inner, &open) {
                break;
            }
            body.push(inner);
        }
        blocks.push(FencedBlock {
            tag: open.tag,
            content: body.join("\n"),
        });
    }
    blocks
}
