//! Case-insensitive location of `<tag>...</tag>` blocks inside free-form model output.

/// Byte span of one complete tag block: `open` is the index of `<`, `inner` the content range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TagBlock {
    pub open: usize,
    pub inner_start: usize,
    pub inner_end: usize,
    pub close_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TagLookup {
    Found(TagBlock),
    Missing,
    Malformed,
}

/// Finds `<name ...>` in `lower` (an ASCII-lowercased copy of the text) starting at `from`.
/// Returns (start of `<`, index after `>`).
fn find_open(lower: &str, name: &str, from: usize) -> Option<(usize, usize)> {
    let needle = format!("<{name}");
    let bytes = lower.as_bytes();
    let mut pos = from;
    while let Some(rel) = lower[pos..].find(&needle) {
        let start = pos + rel;
        let after = start + needle.len();
        match bytes.get(after) {
            Some(b'>') => return Some((start, after + 1)),
            Some(c) if c.is_ascii_whitespace() => {
                if let Some(gt) = lower[after..].find('>') {
                    let end = after + gt;
                    // a '<' before '>' means this was not a tag at all
                    if !lower[after..end].contains('<') && !lower[after..end].contains('/') {
                        return Some((start, end + 1));
                    }
                }
            }
            _ => {}
        }
        pos = after;
    }
    None
}

fn find_close(lower: &str, name: &str, from: usize) -> Option<(usize, usize)> {
    let needle = format!("</{name}");
    let bytes = lower.as_bytes();
    let mut pos = from;
    while let Some(rel) = lower[pos..].find(&needle) {
        let start = pos + rel;
        let mut after = start + needle.len();
        while bytes.get(after).is_some_and(|c| c.is_ascii_whitespace()) {
            after += 1;
        }
        if bytes.get(after) == Some(&b'>') {
            return Some((start, after + 1));
        }
        pos = start + needle.len();
    }
    None
}

/// Locates the first complete block for `name`. A close tag without a preceding open tag,
/// or an open tag that is never closed, is malformed; no trace of the tag at all is missing.
pub(crate) fn locate(lower: &str, name: &str) -> TagLookup {
    match find_open(lower, name, 0) {
        None => {
            if find_close(lower, name, 0).is_some() {
                TagLookup::Malformed
            } else {
                TagLookup::Missing
            }
        }
        Some((open, inner_start)) => {
            // a close tag appearing before the first open tag means swapped tags
            if let Some((c, _)) = find_close(lower, name, 0) {
                if c < open {
                    return TagLookup::Malformed;
                }
            }
            match find_close(lower, name, inner_start) {
                Some((inner_end, close_end)) => TagLookup::Found(TagBlock {
                    open,
                    inner_start,
                    inner_end,
                    close_end,
                }),
                None => TagLookup::Malformed,
            }
        }
    }
}

/// True when two sibling blocks partially overlap or one contains the other.
pub(crate) fn overlaps(a: &TagBlock, b: &TagBlock) -> bool {
    a.open < b.close_end && b.open < a.close_end
}

/// All complete blocks of `name` inside `lower[range]`, in order.
pub(crate) fn all_blocks(lower: &str, name: &str, start: usize, end: usize) -> Vec<TagBlock> {
    let mut out = Vec::new();
    let mut pos = start;
    while pos < end {
        let Some((open, inner_start)) = find_open(lower, name, pos) else {
            break;
        };
        if inner_start > end {
            break;
        }
        let Some((inner_end, close_end)) = find_close(lower, name, inner_start) else {
            break;
        };
        if close_end > end {
            break;
        }
        out.push(TagBlock {
            open,
            inner_start,
            inner_end,
            close_end,
        });
        pos = close_end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_block() {
        let t = "pre <answer> x </answer> post";
        let TagLookup::Found(b) = locate(t, "answer") else {
            panic!()
        };
        assert_eq!(&t[b.inner_start..b.inner_end], " x ");
    }

    #[test]
    fn plural_tag_is_not_singular() {
        let t = "<subquestions>a</subquestions>";
        assert_eq!(locate(t, "subquestion"), TagLookup::Missing);
    }

    #[test]
    fn swapped_is_malformed() {
        assert_eq!(locate("</a>x<a>", "a"), TagLookup::Malformed);
        assert_eq!(locate("<a>x", "a"), TagLookup::Malformed);
        assert_eq!(locate("x</a>", "a"), TagLookup::Malformed);
    }

    #[test]
    fn attributes_and_spaced_close() {
        let t = "<query id=\"1\">abc</query >";
        let TagLookup::Found(b) = locate(t, "query") else {
            panic!()
        };
        assert_eq!(&t[b.inner_start..b.inner_end], "abc");
    }
}
