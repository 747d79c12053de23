use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Output directory plus the pass/fail lines that become `summary.txt`.
pub struct Output {
    dir: PathBuf,
    written: Vec<String>,
    lines: Vec<String>,
    failed: bool,
}

impl Output {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new(), lines: Vec::new(), failed: false })
    }

    /// Writes one artifact immediately, so a later failure leaves it on disk.
    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn check(&mut self, label: &str, passed: bool, detail: impl AsRef<str>) {
        let tag = if passed { "PASS" } else { "FAIL" };
        let line = format!("[{tag}] {label}: {}", detail.as_ref());
        println!("{line}");
        self.failed |= !passed;
        self.lines.push(line);
    }

    pub fn note(&mut self, text: impl AsRef<str>) {
        let line = format!("[INFO] {}", text.as_ref());
        println!("{line}");
        self.lines.push(line);
    }

    pub fn error(&mut self, text: impl AsRef<str>) {
        let line = format!("[ERROR] {}", text.as_ref());
        eprintln!("{line}");
        self.failed = true;
        self.lines.push(line);
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write_summary(&mut self) -> io::Result<()> {
        let mut text = self.lines.join("\n");
        text.push('\n');
        self.write("summary.txt", &text)
    }
}
