//! SVG figures over the CSV artifacts already present in the output
//! directory. Plots are a convenience layer; nothing downstream reads them.

use std::collections::HashMap;
use std::error::Error as StdError;

use plotters::prelude::*;
use serde_json::json;
use tcl_chaos::stats::{brody_pdf, mean_r_goe, mean_r_poisson, reference_ratio_pdf, reference_spacing_pdf, Reference};

use crate::manifest::Artifacts;
use crate::CliError;

type PlotResult = Result<(), Box<dyn StdError>>;
/// Label, colour and density of a reference curve.
type Curve = (String, RGBColor, Box<dyn Fn(f64) -> f64>);

const SIZE: (u32, u32) = (800, 560);
const POISSON: RGBColor = RGBColor(0, 114, 178);
const GOE: RGBColor = RGBColor(213, 94, 0);
const DATA: RGBColor = RGBColor(40, 40, 40);
const FIT: RGBColor = RGBColor(0, 158, 115);

/// Named numeric columns of a CSV with `#` comment lines.
#[derive(Debug, Default)]
pub struct Table {
    columns: HashMap<String, Vec<f64>>,
    rows: usize,
}

impl Table {
    pub fn parse(data: &[u8]) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(data);
        let headers: Vec<String> = rdr.headers().map_err(|e| CliError::Plot(e.to_string()))?.iter().map(str::to_string).collect();
        let mut columns: HashMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::Plot(e.to_string()))?;
            for (h, field) in headers.iter().zip(rec.iter()) {
                let v = field.parse::<f64>().map_err(|e| CliError::Plot(format!("column `{h}`: `{field}`: {e}")))?;
                columns.get_mut(h).expect("header present").push(v);
            }
            rows += 1;
        }
        Ok(Self { columns, rows })
    }

    pub fn col(&self, name: &str) -> Result<&[f64], CliError> {
        self.columns.get(name).map(Vec::as_slice).ok_or_else(|| CliError::Plot(format!("missing column `{name}`")))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

fn bounds(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn positive_bounds(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = bounds(values.into_iter().filter(|v| *v > 0.0));
    let lo = lo.max(1e-300);
    if hi > lo {
        (lo, hi)
    } else {
        (lo / 2.0, lo * 2.0)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}

fn render(art: &mut Artifacts, name: &str, draw: impl FnOnce(DrawingArea<SVGBackend, plotters::coord::Shift>) -> PlotResult) -> Result<(), CliError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(|e| CliError::Plot(e.to_string()))?;
        draw(root).map_err(|e| CliError::Plot(format!("{name}: {e}")))?;
    }
    art.write_bytes(name, svg.as_bytes())?;
    Ok(())
}

fn legend_line(color: RGBColor) -> impl Fn((i32, i32)) -> PathElement<(i32, i32)> {
    move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
}

fn histogram_plot(
    art: &mut Artifacts,
    name: &str,
    hist: &Table,
    caption: &str,
    x_desc: &str,
    curves: &[Curve],
) -> Result<(), CliError> {
    let left = hist.col("bin_left")?.to_vec();
    let right = hist.col("bin_right")?.to_vec();
    let dens = hist.col("density")?.to_vec();
    let (x0, x1) = (left.first().copied().unwrap_or(0.0), right.last().copied().unwrap_or(1.0));
    let grid: Vec<f64> = linspace(x0, x1, 200).collect();
    let y_max = dens
        .iter()
        .copied()
        .chain(curves.iter().flat_map(|(_, _, f)| grid.iter().map(|&x| f(x))))
        .fold(0.0f64, f64::max)
        * 1.1;
    render(art, name, |root| {
        let mut chart = ChartBuilder::on(&root)
            .caption(caption, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d(x0..x1, 0.0..y_max.max(1e-12))?;
        chart.configure_mesh().x_desc(x_desc).y_desc("density").disable_mesh().draw()?;
        chart
            .draw_series(left.iter().zip(&right).zip(&dens).map(|((&l, &r), &d)| Rectangle::new([(l, 0.0), (r, d)], DATA.mix(0.25).filled())))?
            .label("data")
            .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 20, y + 5)], DATA.mix(0.25).filled()));
        for (label, color, f) in curves {
            chart
                .draw_series(LineSeries::new(grid.iter().map(|&x| (x, f(x))), color.stroke_width(2)))?
                .label(label.as_str())
                .legend(legend_line(*color));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    })
}

fn spacing_plot(art: &mut Artifacts, hist: &Table, b: Option<f64>) -> Result<(), CliError> {
    let mut curves: Vec<Curve> = vec![
        ("Poisson e^-s".into(), POISSON, Box::new(|s| reference_spacing_pdf(Reference::Poisson, s))),
        ("Wigner surmise".into(), GOE, Box::new(|s| reference_spacing_pdf(Reference::Goe, s))),
    ];
    if let Some(b) = b {
        curves.push((format!("Brody b = {b:.3}"), FIT, Box::new(move |s| brody_pdf(b, s))));
    }
    histogram_plot(art, "spacing.svg", hist, "Nearest-neighbour spacings", "s", &curves)
}

fn ratio_plot(art: &mut Artifacts, hist: &Table) -> Result<(), CliError> {
    let curves: Vec<Curve> = vec![
        ("Poisson".into(), POISSON, Box::new(|r| reference_ratio_pdf(Reference::Poisson, r))),
        ("GOE".into(), GOE, Box::new(|r| reference_ratio_pdf(Reference::Goe, r))),
    ];
    histogram_plot(art, "ratio.svg", hist, "Adjacent-gap ratios", "r", &curves)
}

fn ramp_plot(art: &mut Artifacts, curve: &Table) -> Result<(), CliError> {
    let x = curve.col("control")?.to_vec();
    let r = curve.col("mean_r")?.to_vec();
    let e = curve.col("r_err")?.to_vec();
    let (x0, x1) = positive_bounds(x.iter().copied());
    let (y0, y1) = bounds(r.iter().zip(&e).flat_map(|(v, s)| [v - s, v + s]).chain([mean_r_poisson(), mean_r_goe()]));
    let pad = 0.05 * (y1 - y0);
    render(art, "r_ramp.svg", |root| {
        let mut chart = ChartBuilder::on(&root)
            .caption("Mean gap ratio across the crossover", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d((x0..x1).log_scale(), (y0 - pad)..(y1 + pad))?;
        chart.configure_mesh().x_desc("control").y_desc("<r>").draw()?;
        for (label, value, color) in [("Poisson", mean_r_poisson(), POISSON), ("GOE", mean_r_goe(), GOE)] {
            chart
                .draw_series(LineSeries::new([(x0, value), (x1, value)], color.stroke_width(1)))?
                .label(label)
                .legend(legend_line(color));
        }
        chart.draw_series(
            x.iter()
                .zip(&r)
                .zip(&e)
                .filter(|((c, _), _)| **c > 0.0)
                .map(|((&c, &v), &s)| ErrorBar::new_vertical(c, v - s, v, v + s, DATA.filled(), 6)),
        )?;
        chart
            .draw_series(LineSeries::new(x.iter().zip(&r).filter(|(c, _)| **c > 0.0).map(|(&c, &v)| (c, v)), DATA.stroke_width(2)))?
            .label("data")
            .legend(legend_line(DATA));
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    })
}

fn sff_plot(art: &mut Artifacts, sff: &Table) -> Result<(), CliError> {
    let t = sff.col("t")?.to_vec();
    let series = [
        ("measured", sff.col("K_measured")?.to_vec(), DATA),
        ("GOE", sff.col("K_goe")?.to_vec(), GOE),
        ("Poisson", sff.col("K_poisson")?.to_vec(), POISSON),
    ];
    let n = sff.col("block_size")?.first().copied().unwrap_or(1.0);
    let (t0, t1) = positive_bounds(t.iter().copied());
    let (y0, y1) = positive_bounds(series.iter().flat_map(|s| s.1.iter().copied()).chain([n]));
    render(art, "sff.svg", |root| {
        let mut chart = ChartBuilder::on(&root)
            .caption("Spectral form factor", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d((t0..t1).log_scale(), (y0 / 1.5..y1 * 1.5).log_scale())?;
        chart.configure_mesh().x_desc("t").y_desc("K(t)").draw()?;
        chart
            .draw_series(LineSeries::new([(t0, n), (t1, n)], BLACK.mix(0.5).stroke_width(1)))?
            .label(format!("plateau N = {n}"))
            .legend(legend_line(RGBColor(128, 128, 128)));
        for (label, values, color) in &series {
            chart
                .draw_series(LineSeries::new(t.iter().zip(values).filter(|(a, v)| **a > 0.0 && **v > 0.0).map(|(&a, &v)| (a, v)), color.stroke_width(2)))?
                .label(*label)
                .legend(legend_line(*color));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    })
}

fn dos_plot(art: &mut Artifacts, raw: Option<&Table>, unfolded: Option<&Table>) -> Result<(), CliError> {
    let panels: Vec<(&str, &str, &Table)> = [("before unfolding", "E", raw), ("after unfolding", "unfolded level", unfolded)]
        .into_iter()
        .filter_map(|(c, x, t)| t.map(|t| (c, x, t)))
        .collect();
    let mut data = Vec::new();
    for (c, xd, t) in &panels {
        data.push((*c, *xd, t.col("bin_left")?.to_vec(), t.col("bin_right")?.to_vec(), t.col("count")?.to_vec()));
    }
    render(art, "dos.svg", |root| {
        let areas = root.split_evenly((1, data.len()));
        for ((caption, x_desc, l, r, c), area) in data.iter().zip(&areas) {
            let (x0, x1) = bounds(l.iter().chain(r.iter()).copied());
            let y1 = c.iter().copied().fold(1.0f64, f64::max) * 1.1;
            let mut chart = ChartBuilder::on(area)
                .caption(format!("Density of states, {caption}"), ("sans-serif", 18))
                .margin(10)
                .x_label_area_size(40)
                .y_label_area_size(50)
                .build_cartesian_2d(x0..x1, 0.0..y1)?;
            chart.configure_mesh().x_desc(*x_desc).y_desc("count").disable_mesh().draw()?;
            chart.draw_series(l.iter().zip(r).zip(c).map(|((&a, &b), &h)| Rectangle::new([(a, 0.0), (b, h)], POISSON.mix(0.4).filled())))?;
        }
        root.present()?;
        Ok(())
    })
}

fn section_plot(art: &mut Artifacts, section: &Table) -> Result<(), CliError> {
    let id = section.col("trajectory_id")?.to_vec();
    let x = section.col("x_c")?.to_vec();
    let p = section.col("p_c")?.to_vec();
    let (x0, x1) = bounds(x.iter().copied());
    let (p0, p1) = bounds(p.iter().copied());
    let (dx, dp) = (0.05 * (x1 - x0), 0.05 * (p1 - p0));
    render(art, "section.svg", |root| {
        let mut chart = ChartBuilder::on(&root)
            .caption("Poincaré section p_s = 0", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d((x0 - dx)..(x1 + dx), (p0 - dp)..(p1 + dp))?;
        chart.configure_mesh().x_desc("x_c").y_desc("p_c").draw()?;
        chart.draw_series(
            id.iter()
                .zip(x.iter().zip(&p))
                .map(|(&k, (&a, &b))| Circle::new((a, b), 1, Palette99::pick(k as usize).filled())),
        )?;
        root.present()?;
        Ok(())
    })
}

fn map_plot(art: &mut Artifacts, maps: &[(String, Table)]) -> Result<(), CliError> {
    let mut data = Vec::new();
    for (label, t) in maps {
        data.push((label.clone(), t.col("j_over_lambda")?.to_vec(), t.col("mu")?.to_vec(), t.col("band_low")?.to_vec(), t.col("band_high")?.to_vec()));
    }
    let (j0, j1) = bounds(data.iter().flat_map(|d| d.1.iter().copied()));
    let (m0, m1) = bounds(data.iter().flat_map(|d| d.3.iter().chain(d.4.iter()).copied()));
    let pad = 0.05 * (m1 - m0);
    render(art, "map.svg", |root| {
        let mut chart = ChartBuilder::on(&root)
            .caption("Lattice-to-impurity map", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d(j0..j1, (m0 - pad)..(m1 + pad))?;
        chart.configure_mesh().x_desc("J/λ").y_desc("μ").draw()?;
        for (k, (label, j, mu, lo, hi)) in data.iter().enumerate() {
            let color = if k == 0 { FIT } else { GOE };
            let band: Vec<(f64, f64)> = j.iter().zip(hi).map(|(&a, &b)| (a, b)).chain(j.iter().zip(lo).rev().map(|(&a, &b)| (a, b))).collect();
            chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))?;
            chart
                .draw_series(LineSeries::new(j.iter().zip(mu).map(|(&a, &b)| (a, b)), color.stroke_width(2)))?
                .label(label.as_str())
                .legend(legend_line(color));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    })
}

fn load(art: &mut Artifacts, name: &str) -> Result<Option<Table>, CliError> {
    let path = art.dir().join(name);
    if !path.exists() {
        return Ok(None);
    }
    let data = art.read_input(&path)?;
    Table::parse(&data).map(Some)
}

/// Renders every figure whose source CSV exists in the output directory.
/// Errors when there is nothing to plot.
pub fn plot_all(art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let mut made = Vec::new();
    if let Some(t) = load(art, "spacing.csv")? {
        let stats_path = art.dir().join("stats.json");
        let b = if stats_path.exists() {
            let data = art.read_input(&stats_path)?;
            serde_json::from_slice::<serde_json::Value>(&data).ok().and_then(|v| v["b"].as_f64())
        } else {
            None
        };
        spacing_plot(art, &t, b)?;
        made.push("spacing.svg");
    }
    if let Some(t) = load(art, "ratio.csv")? {
        ratio_plot(art, &t)?;
        made.push("ratio.svg");
    }
    if let Some(t) = load(art, "curve.csv")? {
        if t.rows() > 0 {
            ramp_plot(art, &t)?;
            made.push("r_ramp.svg");
        }
    }
    if let Some(t) = load(art, "sff.csv")? {
        sff_plot(art, &t)?;
        made.push("sff.svg");
    }
    let raw = load(art, "dos_raw.csv")?;
    let unf = load(art, "dos_unfolded.csv")?;
    if raw.is_some() || unf.is_some() {
        dos_plot(art, raw.as_ref(), unf.as_ref())?;
        made.push("dos.svg");
    }
    if let Some(t) = load(art, "section.csv")? {
        section_plot(art, &t)?;
        made.push("section.svg");
    }
    let mut maps = Vec::new();
    for (file, label) in [("map_b.csv", "from b"), ("map_r.csv", "from <r>")] {
        if let Some(t) = load(art, file)? {
            maps.push((label.to_string(), t));
        }
    }
    if !maps.is_empty() {
        map_plot(art, &maps)?;
        made.push("map.svg");
    }
    if made.is_empty() {
        return Err(CliError::MissingInput(format!("no plottable CSV files in {}", art.dir().display())));
    }
    Ok(json!({ "plots": made }))
}
