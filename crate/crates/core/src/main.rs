use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FV_LOG", "warn")).init();
    let code = flowvision::cli::main_with_args(std::env::args_os());
    ExitCode::from(code as u8)
}
