// SPDX-License-Identifier: Apache-2.0
fn main() {
    std::process::exit(dicke_lab::run(std::env::args_os()));
}
