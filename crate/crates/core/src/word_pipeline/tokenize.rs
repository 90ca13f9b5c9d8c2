//! Caption tokenization and removal of tokens that cannot be words:
//! URLs, file names and anything containing digits or symbols.

/// Extensions recognized in `name.ext` file-name tokens.
pub const FILE_EXTENSIONS: &[&str] = &[
    "jpg", "jpeg", "png", "gif", "bmp", "tif", "tiff", "webp", "svg", "ico", "heic", "raw",
    "pdf", "doc", "docx", "txt", "csv", "xls", "xlsx", "ppt", "pptx", "rtf", "html", "htm",
    "php", "asp", "aspx", "jsp", "js", "css", "json", "xml", "mp3", "mp4", "wav", "avi",
    "mov", "mkv", "flv", "wmv", "zip", "rar", "gz", "tar", "7z", "exe", "dmg", "iso",
];

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.contains("://") || lower.starts_with("www.")
}

fn is_filename(token: &str) -> bool {
    match token.rsplit_once('.') {
        Some((name, ext)) if !name.is_empty() => {
            let ext = ext.to_ascii_lowercase();
            FILE_EXTENSIONS.contains(&ext.as_str())
        }
        _ => false,
    }
}

fn strip_edges(token: &str) -> &str {
    let t = token.trim_matches(|c: char| !c.is_alphanumeric());
    t.strip_suffix("'s")
        .or_else(|| t.strip_suffix("\u{2019}s"))
        .unwrap_or(t)
}

/// Split captions into word tokens. With `remove` set, URL fragments, file
/// names and tokens holding digits or other non-letters are dropped;
/// otherwise tokens are only split and trimmed.
pub fn tokenize(caption: &str, remove: bool) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in caption.split_whitespace() {
        if remove && is_url(chunk) {
            continue;
        }
        let trimmed = strip_edges(chunk);
        if trimmed.is_empty() || (remove && is_filename(trimmed)) {
            continue;
        }
        for part in trimmed.split('-') {
            let part = strip_edges(part);
            if part.is_empty() {
                continue;
            }
            if remove && !part.chars().all(char::is_alphabetic) {
                continue;
            }
            out.push(part.to_string());
        }
    }
    out
}

/// Tokenize and clean a batch of captions, concatenating the tokens.
pub fn tokenize_and_remove<S: AsRef<str>>(captions: &[S]) -> Vec<String> {
    captions
        .iter()
        .flat_map(|c| tokenize(c.as_ref(), true))
        .collect()
}
