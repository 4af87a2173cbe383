//! Process execution under resource limits.
//!
//! Every process runs in its own process group with rlimits applied. When
//! the host permits it (root, or unprivileged namespaces), the process
//! also gets a private network namespace with no interfaces up and, for
//! the test phase, a mount namespace in which every mount is read-only.
//! Without namespaces, `RLIMIT_FSIZE = 0` still stops test-phase file
//! writes.

use std::collections::BTreeMap;
use std::ffi::CString;
use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Build,
    Run,
}

#[derive(Debug, Clone)]
pub struct ProcessLimits {
    pub wall_time: Duration,
    /// Address-space cap; `None` for runtimes that reserve large virtual
    /// ranges up front (JVM, V8, Go).
    pub address_space: Option<u64>,
    pub output_cap: usize,
}

#[derive(Debug, Clone)]
pub struct ProcessOutcome {
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub timed_out: bool,
    pub output_overflow: bool,
    pub duration: Duration,
}

impl ProcessOutcome {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0) && !self.timed_out && !self.output_overflow
    }
}

const STDERR_CAP: usize = 64 * 1024;

fn mount_points() -> &'static [CString] {
    static MOUNTS: OnceLock<Vec<CString>> = OnceLock::new();
    MOUNTS.get_or_init(|| {
        std::fs::read_to_string("/proc/self/mountinfo")
            .unwrap_or_default()
            .lines()
            .filter_map(|l| l.split(' ').nth(4))
            .map(|mp| unescape_mountinfo(mp))
            .filter_map(|mp| CString::new(mp).ok())
            .collect()
    })
}

fn unescape_mountinfo(s: &str) -> String {
    // mountinfo escapes space, tab, newline and backslash as \ooo
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let octal = bytes
            .get(i + 1..i + 4)
            .filter(|_| bytes[i] == b'\\')
            .and_then(|d| std::str::from_utf8(d).ok())
            .and_then(|d| u8::from_str_radix(d, 8).ok());
        match octal {
            Some(v) => {
                out.push(v);
                i += 4;
            }
            None => {
                out.push(bytes[i]);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn set_rlimit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

/// Runs `argv` in `cwd`, feeding `stdin` and capturing output up to the
/// cap. The whole process group is killed on timeout or overflow.
pub fn run_process(
    argv: &[String],
    cwd: &Path,
    env: &BTreeMap<String, String>,
    stdin: &[u8],
    limits: &ProcessLimits,
    phase: Phase,
) -> std::io::Result<ProcessOutcome> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .env_clear()
        .envs(env)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let mounts = if phase == Phase::Run { mount_points() } else { &[] };
    let root = CString::new("/").unwrap();
    let address_space = limits.address_space;
    let cpu_secs = limits.wall_time.as_secs() + 1;
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            if let Some(bytes) = address_space {
                set_rlimit(libc::RLIMIT_AS, bytes);
            }
            set_rlimit(libc::RLIMIT_CPU, cpu_secs);
            set_rlimit(libc::RLIMIT_CORE, 0);
            if phase == Phase::Run {
                set_rlimit(libc::RLIMIT_FSIZE, 0);
                if libc::unshare(libc::CLONE_NEWNET | libc::CLONE_NEWNS) == 0 {
                    libc::mount(
                        std::ptr::null(),
                        root.as_ptr(),
                        std::ptr::null(),
                        libc::MS_REC | libc::MS_PRIVATE,
                        std::ptr::null(),
                    );
                    for mp in mounts {
                        libc::mount(
                            std::ptr::null(),
                            mp.as_ptr(),
                            std::ptr::null(),
                            libc::MS_REMOUNT | libc::MS_BIND | libc::MS_RDONLY,
                            std::ptr::null(),
                        );
                    }
                }
            } else {
                libc::unshare(libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as i32;

    let mut child_stdin = child.stdin.take().expect("piped stdin");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        // the program may exit without reading its input
        let _ = child_stdin.write_all(&input);
    });

    let cap = limits.output_cap;
    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let stdout_reader = thread::spawn(move || read_capped(&mut out_pipe, cap));
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let stderr_reader = thread::spawn(move || read_capped(&mut err_pipe, STDERR_CAP));

    let deadline = started + limits.wall_time;
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if stdout_reader.is_finished() {
            // reader stops early only when the cap is exceeded or the pipe closes
            if let Some(status) = child.try_wait()? {
                break status;
            }
        }
        if Instant::now() >= deadline {
            timed_out = true;
            unsafe {
                libc::kill(-pgid, libc::SIGKILL);
            }
            break child.wait()?;
        }
        thread::sleep(Duration::from_millis(2));
    };
    let duration = started.elapsed();
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    let _ = writer.join();
    let (stdout, output_overflow) = stdout_reader.join().unwrap_or_default();
    let (stderr, _) = stderr_reader.join().unwrap_or_default();

    Ok(ProcessOutcome {
        exit_code: status.code(),
        signal: status.signal(),
        stdout,
        stderr,
        timed_out,
        output_overflow,
        duration,
    })
}

/// Reads until EOF or until more than `cap` bytes arrived. Returns the
/// first `cap` bytes and whether the cap was exceeded.
fn read_capped(pipe: &mut impl Read, cap: usize) -> (Vec<u8>, bool) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match pipe.read(&mut chunk) {
            Ok(0) | Err(_) => return (buf, false),
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if buf.len() > cap {
                    buf.truncate(cap);
                    return (buf, true);
                }
            }
        }
    }
}
