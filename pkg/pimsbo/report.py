"""
PDF summary report for pimsbo runs
"""

from pathlib import Path

from reportlab.lib import colors
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

TABLE_STYLE = TableStyle([
    ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),  # Header row
    ('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey),
    ('GRID', (0, 0), (-1, -1), 0.25, colors.black),
    ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
])


def _fmt(value):
    return f"{value:.4g}"


class ReportGenerator:
    """Renders summary.json and manifest.json of a run as a PDF"""

    def __init__(self, storage):
        self.storage = storage
        self.styles = getSampleStyleSheet()
        self._setup_custom_styles()

    def _setup_custom_styles(self):
        self.styles.add(ParagraphStyle(
            name='ReportTitle',
            fontName='Helvetica-Bold',
            fontSize=16,
            leading=20
        ))
        self.styles.add(ParagraphStyle(
            name='ReportHeading',
            fontName='Helvetica-Bold',
            fontSize=12,
            leading=14,
        ))
        self.styles.add(ParagraphStyle(
            name='Small',
            fontName='Helvetica',
            fontSize=8,
            leading=10,
        ))

    def regret_rows(self, summary):
        """Final-step regret of every policy as table rows, header first"""
        rows = [["Policy", "Simple", "± s.e.", "Cumulative", "± s.e.", "Modified simple"]]
        for name in sorted(summary["policies"]):
            entry = summary["policies"][name]
            simple = entry["simple_regret"]
            cumulative = entry["cumulative_regret"]
            rows.append([name, _fmt(simple["mean"][-1]), _fmt(simple["stderr"][-1]),
                         _fmt(cumulative["mean"][-1]), _fmt(cumulative["stderr"][-1]),
                         _fmt(entry["modified_simple_regret"]["mean"][-1])])
        return rows

    def std_rows(self, summary):
        rows = [["Policy", "Mean evaluated std", "Std across trials", "Median confidence (last)"]]
        for name in sorted(summary["policies"]):
            entry = summary["policies"][name]
            confidence = entry.get("confidence")
            last = _fmt(confidence["median"][-1]) if confidence else "-"
            rows.append([name, _fmt(entry["evaluated_std"]["mean"]),
                         _fmt(entry["evaluated_std"]["std"]), last])
        return rows

    def continuous_rows(self, summary):
        bounds = summary.get("continuous_bounds")
        if not bounds:
            return []
        return [
            ["Box domain", f"a={_fmt(bounds['a'])}, b={_fmt(bounds['b'])}"],
            ["Divisions per dimension tau_T", str(bounds["tau_T"])],
            ["s_T", _fmt(bounds["s_T"])],
            ["m_T", _fmt(bounds["m_T"])],
            ["TS cumulative regret", _fmt(bounds["ts_bcr"])],
            ["TS on the lattice, cumulative regret", _fmt(bounds["ts_discretized_bcr"])],
            ["PIMS cumulative regret", _fmt(bounds["pims_bcr"])],
            ["PIMS simple regret", _fmt(bounds["pims_bsr"])],
        ]

    def generate_report(self, output_filename):
        """Write the PDF and return its absolute path"""
        summary = self.storage.load_summary()
        manifest = self.storage.load_manifest()
        config = manifest["config"]

        output_path = Path(output_filename).resolve()
        doc = SimpleDocTemplate(
            str(output_path),
            pagesize=letter,
            rightMargin=0.5*inch,
            leftMargin=0.5*inch,
            topMargin=0.5*inch,
            bottomMargin=0.5*inch,
            title="pimsbo run summary",
            subject=f"config {manifest['config_hash'][:12]}",
            invariant=1,
        )

        elements = [Paragraph("Run summary", self.styles['ReportTitle']), Spacer(1, 0.3*inch)]
        kernel = config["kernel"] if config.get("nu") is None else f"{config['kernel']} nu={config['nu']}"
        setting = (f"<b>Kernel</b> {kernel}, lengthscale {config['lengthscale']}<br/>"
                   f"<b>Grid</b> {summary['grid_size']} points, d={config['dim']}<br/>"
                   f"<b>Noise variance</b> {config['noise_var']}<br/>"
                   f"<b>T</b> {summary['T']}, <b>trials</b> {summary['trials']}, "
                   f"<b>seed</b> {manifest['seed']}")
        elements.append(Paragraph(setting, self.styles['Normal']))
        elements.append(Spacer(1, 0.3*inch))

        elements.append(Paragraph("REGRET AT T", self.styles['ReportHeading']))
        elements.append(Spacer(1, 0.1*inch))
        regret_table = Table(self.regret_rows(summary), hAlign='LEFT')
        regret_table.setStyle(TABLE_STYLE)
        elements.append(regret_table)
        if "bcr_bound" in summary:
            elements.append(Spacer(1, 0.1*inch))
            elements.append(Paragraph(
                f"Cumulative regret bound for TS and PIMS: {_fmt(summary['bcr_bound'])} "
                f"(information gain upper bound {_fmt(summary['gamma_upper'])})",
                self.styles['Normal']))
        continuous = self.continuous_rows(summary)
        if continuous:
            elements.append(Spacer(1, 0.1*inch))
            continuous_table = Table(continuous, hAlign='LEFT')
            continuous_table.setStyle(TABLE_STYLE)
            elements.append(continuous_table)
        elements.append(Spacer(1, 0.3*inch))

        elements.append(Paragraph("EVALUATED POSTERIOR STD", self.styles['ReportHeading']))
        elements.append(Spacer(1, 0.1*inch))
        std_table = Table(self.std_rows(summary), hAlign='LEFT')
        std_table.setStyle(TABLE_STYLE)
        elements.append(std_table)
        if "evaluated_std_pvalue" in summary:
            elements.append(Spacer(1, 0.1*inch))
            elements.append(Paragraph(
                f"Paired one-sided test TS &gt; PIMS: p = {_fmt(summary['evaluated_std_pvalue'])}",
                self.styles['Normal']))

        elements.append(Spacer(1, 0.5*inch))
        elements.append(Paragraph(f"config hash {manifest['config_hash']}, "
                                  f"pimsbo {manifest['version']}", self.styles['Small']))
        doc.build(elements)
        return str(output_path)
