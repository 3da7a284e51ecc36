//! String-level repairs for almost-JSON text. Every function here only
//! touches structure (quotes, brackets, commas); scalar values pass through
//! unchanged.

/// End offset (exclusive) of the bracket region opened at `start`, or `None`
/// if it never closes or closes with the wrong bracket.
pub(crate) fn balanced_region(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut stack: Vec<u8> = Vec::new();
    let mut in_string = false;
    let mut escape = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escape {
                escape = false;
            } else if b == b'\\' {
                escape = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
        if stack.is_empty() {
            // `start` did not point at an opening bracket
            return None;
        }
    }
    None
}

/// Byte offsets of every `{` or `[` outside double-quoted strings.
pub(crate) fn opening_brackets(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut in_string = false;
    let mut escape = false;
    for (i, b) in text.bytes().enumerate() {
        if in_string {
            if escape {
                escape = false;
            } else if b == b'\\' {
                escape = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => out.push(i),
            _ => {}
        }
    }
    out
}

/// Removes every run of three backticks and an optional language tag.
pub(crate) fn strip_fence_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find("```") {
        out.push_str(&rest[..pos]);
        rest = &rest[pos + 3..];
        let tag_len = rest
            .char_indices()
            .take_while(|(_, c)| c.is_ascii_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .last()
            .unwrap_or(0);
        rest = &rest[tag_len..];
        out.push(' ');
    }
    out.push_str(rest);
    out
}

/// `"Key"": value` (a doubled closing quote on a key) becomes `"Key": value`.
pub(crate) fn fix_doubled_quotes(text: &str) -> String {
    let re = regex::Regex::new(r#""([A-Za-z_][A-Za-z0-9_ ]*)""(\s*:)"#).expect("static regex");
    re.replace_all(text, "\"$1\"$2").into_owned()
}

fn prev_significant(out: &str) -> Option<char> {
    out.chars().rev().find(|c| !c.is_whitespace())
}

/// Converts single-quoted strings in structural position to double-quoted
/// ones. A single quote only opens a string right after `{`, `[`, `,` or
/// `:` and only closes one when followed by `,`, `:`, `}` or `]`, so
/// apostrophes inside prose survive.
pub(crate) fn single_to_double_quotes(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut in_double = false;
    let mut escape = false;
    while i < chars.len() {
        let c = chars[i];
        if in_double {
            out.push(c);
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_double = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_double = true;
            out.push(c);
            i += 1;
            continue;
        }
        let opens = c == '\''
            && matches!(prev_significant(&out), Some('{' | '[' | ',' | ':') | None);
        if opens {
            let close = (i + 1..chars.len()).find(|&j| {
                chars[j] == '\''
                    && chars[j + 1..]
                        .iter()
                        .find(|c| !c.is_whitespace())
                        .map_or(true, |n| matches!(n, ',' | ':' | '}' | ']'))
            });
            if let Some(j) = close {
                out.push('"');
                for &inner in &chars[i + 1..j] {
                    if inner == '"' {
                        out.push('\\');
                    }
                    out.push(inner);
                }
                out.push('"');
                i = j + 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Wraps bare object keys (`{Model: "A"}`) in double quotes.
pub(crate) fn quote_bare_keys(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 16);
    let mut i = 0;
    let mut in_string = false;
    let mut escape = false;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            i += 1;
            continue;
        }
        if (c.is_ascii_alphabetic() || c == '_') && matches!(prev_significant(&out), Some('{' | ',')) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_' || chars[j] == ' ') {
                j += 1;
            }
            if j < chars.len() && chars[j] == ':' {
                let key: String = chars[i..j].iter().collect();
                out.push('"');
                out.push_str(key.trim_end());
                out.push('"');
                i = j;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Drops commas that directly precede a closing bracket.
pub(crate) fn drop_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escape = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}' | ']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_skips_brackets_in_strings() {
        let t = r#"xx {"a": "}]", "b": [1, 2]} tail"#;
        let end = balanced_region(t, 3).unwrap();
        assert_eq!(&t[3..end], r#"{"a": "}]", "b": [1, 2]}"#);
        assert_eq!(balanced_region("{]", 0), None);
        assert_eq!(balanced_region("{", 0), None);
    }

    #[test]
    fn fences_stripped() {
        assert_eq!(strip_fence_markers("```json\n{}\n```").trim(), "{}");
    }

    #[test]
    fn doubled_quote_key() {
        assert_eq!(
            fix_doubled_quotes(r#"{"Explanation"": "x"}"#),
            r#"{"Explanation": "x"}"#
        );
    }

    #[test]
    fn single_quotes_become_double() {
        let t = "{'Model': 'Model A', 'Explanation': 'A's answer is \"better\"'}";
        let fixed = single_to_double_quotes(t);
        let v: serde_json::Value = serde_json::from_str(&fixed).unwrap();
        assert_eq!(v["Model"], "Model A");
        assert_eq!(v["Explanation"], "A's answer is \"better\"");
    }

    #[test]
    fn bare_keys_quoted() {
        let fixed = quote_bare_keys(r#"{Model: "Model A", Explanation: "a: b", Type: "relevance"}"#);
        let v: serde_json::Value = serde_json::from_str(&fixed).unwrap();
        assert_eq!(v["Explanation"], "a: b");
        assert_eq!(v["Type"], "relevance");
    }

    #[test]
    fn trailing_commas_dropped() {
        let fixed = drop_trailing_commas(r#"[{"a": 1, "b": ",}",},]"#);
        assert_eq!(fixed, r#"[{"a": 1, "b": ",}"}]"#);
    }
}
