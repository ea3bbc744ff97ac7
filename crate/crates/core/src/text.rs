//! Sentence-level text helpers shared by filtering, prediction and merging.

use serde::{Deserialize, Serialize};

/// Sentence terminators and the closing marks allowed to trail them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Punctuation {
    pub terminators: Vec<char>,
    pub closers: Vec<char>,
}

impl Default for Punctuation {
    fn default() -> Self {
        Self {
            terminators: vec!['.', '!', '?', '。', '！', '？', ':', '；', ';'],
            closers: vec![')', ']', '}', '"', '\'', '”', '’', '」', '』', '）', '】', '》'],
        }
    }
}

impl Punctuation {
    pub fn is_terminator(&self, c: char) -> bool {
        self.terminators.contains(&c)
    }

    pub fn is_closer(&self, c: char) -> bool {
        self.closers.contains(&c)
    }

    /// True when `text` ends in a terminator, optionally followed by closing
    /// quotes or brackets (`end."`, `(done.)`).
    pub fn ends_with_terminator(&self, text: &str) -> bool {
        let trimmed = text.trim_end();
        let mut chars = trimmed.chars().rev().peekable();
        while chars.peek().is_some_and(|c| self.is_closer(*c)) {
            chars.next();
        }
        chars.next().is_some_and(|c| self.is_terminator(c))
    }

    /// Split into sentences. An ASCII terminator only ends a sentence when
    /// followed by whitespace or the end of the text, so `1.1` and `3.5`
    /// stay intact; full-width terminators always split.
    pub fn sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let (_, c) = chars[i];
            if self.is_terminator(c) {
                let mut j = i + 1;
                while j < chars.len() && self.is_closer(chars[j].1) {
                    j += 1;
                }
                let at_break = j == chars.len() || chars[j].1.is_whitespace() || !c.is_ascii();
                if at_break {
                    let end = chars.get(j).map_or(text.len(), |(b, _)| *b);
                    let s = text[start..end].trim();
                    if !s.is_empty() {
                        out.push(s);
                    }
                    start = end;
                    i = j;
                    continue;
                }
            }
            i += 1;
        }
        let rest = text[start..].trim();
        if !rest.is_empty() {
            out.push(rest);
        }
        out
    }

    /// First sentence, capped at `cap` characters from the start.
    pub fn first_sentence(&self, text: &str, cap: usize) -> String {
        let s = self.sentences(text).first().copied().unwrap_or("");
        s.chars().take(cap).collect()
    }

    /// Last sentence, capped at `cap` characters from the end.
    pub fn last_sentence(&self, text: &str, cap: usize) -> String {
        let s = self.sentences(text).last().copied().unwrap_or("");
        let n = s.chars().count();
        s.chars().skip(n.saturating_sub(cap)).collect()
    }
}

/// CJK ideographs, kana, hangul and full-width punctuation.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F
        | 0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0xFF00..=0xFFEF)
}

/// How two fragments were glued together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinKind {
    /// Single space between the fragments.
    Space,
    /// `decom-` + `posed`: trailing hyphen after a letter removed, no space.
    Dehyphenated,
    /// `2023-` + `01`: hyphen after a digit kept, no space.
    HyphenKept,
    /// A CJK character on either side of the seam, no space.
    Direct,
    /// One side was empty.
    Empty,
}

/// Join two fragments of a logical paragraph or cell.
pub fn join_fragments(head: &str, tail: &str) -> (String, JoinKind) {
    let a = head.trim_end();
    let b = tail.trim_start();
    if a.is_empty() || b.is_empty() {
        return (format!("{a}{b}"), JoinKind::Empty);
    }
    let mut rev = a.chars().rev();
    let last = rev.next().unwrap_or(' ');
    let before = rev.next();
    if last == '-' {
        match before {
            Some(c) if c.is_alphabetic() => {
                return (format!("{}{b}", &a[..a.len() - 1]), JoinKind::Dehyphenated)
            }
            Some(c) if c.is_ascii_digit() => return (format!("{a}{b}"), JoinKind::HyphenKept),
            _ => {}
        }
    }
    let first = b.chars().next().unwrap_or(' ');
    if is_cjk(last) || is_cjk(first) {
        return (format!("{a}{b}"), JoinKind::Direct);
    }
    (format!("{a} {b}"), JoinKind::Space)
}

/// Collapse internal whitespace runs to single spaces.
pub fn squash_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminator_detection() {
        let p = Punctuation::default();
        assert!(p.ends_with_terminator("end of sentence."));
        assert!(p.ends_with_terminator("he said \"stop.\"  "));
        assert!(p.ends_with_terminator("完成。"));
        assert!(p.ends_with_terminator("as follows:"));
        assert!(!p.ends_with_terminator("the proposed meth"));
        assert!(!p.ends_with_terminator("(see Table 1)"));
        assert!(!p.ends_with_terminator(""));
    }

    #[test]
    fn sentence_split_keeps_numbers() {
        let p = Punctuation::default();
        assert_eq!(
            p.sentences("Section 1.1 covers 3.5 units. Next one! Last part"),
            vec!["Section 1.1 covers 3.5 units.", "Next one!", "Last part"]
        );
        assert_eq!(p.sentences("第一句。第二句"), vec!["第一句。", "第二句"]);
        assert!(p.sentences("   ").is_empty());
    }

    #[test]
    fn first_and_last_sentence_caps() {
        let p = Punctuation::default();
        assert_eq!(p.first_sentence("Alpha beta. Gamma", 100), "Alpha beta.");
        assert_eq!(p.last_sentence("Alpha beta. Gamma", 100), "Gamma");
        assert_eq!(p.first_sentence("abcdef", 3), "abc");
        assert_eq!(p.last_sentence("abcdef", 3), "def");
    }

    #[test]
    fn join_rules() {
        assert_eq!(join_fragments("propagation can", "be decomposed").0, "propagation can be decomposed");
        assert_eq!(join_fragments("decom-", "posed").0, "decomposed");
        assert_eq!(join_fragments("2023-", "01-15"), ("2023-01-15".into(), JoinKind::HyphenKept));
        assert_eq!(join_fragments("这是一个", "句子").0, "这是一个句子");
        assert_eq!(join_fragments("", "x"), ("x".into(), JoinKind::Empty));
        assert_eq!(join_fragments("a -", "b").0, "a - b");
    }
}
