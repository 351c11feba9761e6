//! Gnuplot scripts written next to each CSV.

use std::path::Path;

use crate::AppError;

pub enum Plot<'a> {
    /// `theta_scan_deg,phi_scan_deg,directivity_dBi,...`
    Contour { title: &'a str },
    /// `theta_deg,phi_deg,U,directivity_dBi`
    Sphere { title: &'a str },
    /// `angle_deg,directivity_dBi`
    Cut { title: &'a str, xlabel: &'a str },
    /// `index,x,y,z,...` in meters.
    Layout { title: &'a str },
    /// `index,weight`
    Weights { title: &'a str },
}

fn header(csv: &str, title: &str) -> String {
    let png = csv.trim_end_matches(".csv");
    format!(
        "set datafile separator ','\nset terminal pngcairo size 900,700\nset output '{png}.png'\nset title '{title}' noenhanced\nset key autotitle columnhead\n"
    )
}

/// Writes `<csv stem>.gp` beside `csv`.
pub fn write(csv: &Path, plot: Plot) -> Result<(), AppError> {
    let name = csv.file_name().and_then(|n| n.to_str()).unwrap_or("data.csv");
    let body = match plot {
        Plot::Contour { title } => format!(
            "{}set xlabel 'theta_s (deg)'\nset ylabel 'phi_s (deg)'\nset cblabel 'D (dBi)'\nset palette rgbformulae 33,13,10\nunset key\nplot '{name}' using 1:2:3 with points pt 5 ps 2 palette\n",
            header(name, title)
        ),
        Plot::Sphere { title } => format!(
            "{}set xlabel 'theta (deg)'\nset ylabel 'phi (deg)'\nset cblabel 'D (dBi)'\nset cbrange [-30:*]\nset palette rgbformulae 33,13,10\nunset key\nplot '{name}' using 1:2:4 with points pt 5 ps 0.5 palette\n",
            header(name, title)
        ),
        Plot::Cut { title, xlabel } => format!(
            "{}set xlabel '{xlabel}'\nset ylabel 'D (dBi)'\nset yrange [-30:*]\nset grid\nplot '{name}' using 1:2 with lines lw 2\n",
            header(name, title)
        ),
        Plot::Layout { title } => format!(
            "{}set xlabel 'x (m)'\nset ylabel 'y (m)'\nset zlabel 'z (m)'\nset view equal xy\nunset key\nsplot '{name}' using 2:3:4 with points pt 7 ps 1.5, '' using 2:3:4:(0.01*$5):(0.01*$6):(0.01*$7) with vectors\n",
            header(name, title)
        ),
        Plot::Weights { title } => format!(
            "{}set xlabel 'element'\nset ylabel 'amplitude'\nset style fill solid 0.6\nunset key\nplot '{name}' using 1:2 with boxes\n",
            header(name, title)
        ),
    };
    let gp = csv.with_extension("gp");
    std::fs::write(&gp, body).map_err(|e| AppError::input(format!("{}: {e}", gp.display())))
}
