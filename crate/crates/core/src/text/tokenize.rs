use super::porter;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Splits one whitespace-delimited chunk into word and punctuation runs.
///
/// Leading and trailing punctuation is dropped, internal punctuation runs
/// become their own tokens, and a chunk made only of punctuation is kept whole.
fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    if !chunk.chars().any(is_word_char) {
        out.push(chunk.to_string());
        return;
    }
    let trimmed = chunk.trim_matches(|c: char| !is_word_char(c));
    let mut start = 0;
    let mut current_is_word = None;
    for (idx, c) in trimmed.char_indices() {
        let w = is_word_char(c);
        match current_is_word {
            Some(prev) if prev != w => {
                out.push(trimmed[start..idx].to_string());
                start = idx;
            }
            _ => {}
        }
        current_is_word = Some(w);
    }
    if start < trimmed.len() {
        out.push(trimmed[start..].to_string());
    }
}

/// Lowercased surface tokens, before stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(&chunk.to_lowercase(), &mut out);
    }
    out
}

/// Tokenize, lowercase and Porter-stem.
pub fn normalize(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| porter::stem(&t)).collect()
}

/// Subject tokens followed by body tokens.
pub fn normalize_question(subject: &str, body: &str) -> Vec<String> {
    let mut tokens = normalize(subject);
    tokens.extend(normalize(body));
    tokens
}
