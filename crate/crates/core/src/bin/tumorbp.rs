use std::io::Write;

fn main() {
    let out = tumor_branching::cli::run(std::env::args_os());
    let stream = if out.exit == 0 {
        &mut std::io::stdout() as &mut dyn Write
    } else {
        &mut std::io::stderr()
    };
    let _ = stream.write_all(out.summary.as_bytes());
    std::process::exit(out.exit);
}
