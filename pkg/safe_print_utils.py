"""
Console output that never breaks on narrow encodings (e.g. cp1252 terminals)
"""

# Math glyphs that show up in scenario names and messages
GLYPH_REPLACEMENTS = {
    'ρ': 'rho',
    'γ': 'gamma',
    'σ': 'sigma',
    'τ': 'tau',
    'Ψ': 'Psi',
    'φ': 'phi',
    'Φ': 'Phi',
    '√': 'sqrt',
    '≤': '<=',
    '≥': '>=',
    '≈': '~',
    '∞': 'inf',
    '→': '->',
    '±': '+/-',
    '—': '--',
    '–': '-',
}


def to_ascii(text: str) -> str:
    """Transliterate known glyphs, replace anything else that is not ASCII."""
    cleaned_text = str(text)
    for glyph, replacement in GLYPH_REPLACEMENTS.items():
        cleaned_text = cleaned_text.replace(glyph, replacement)
    return cleaned_text.encode('ascii', 'replace').decode('ascii')


def safe_print_global(text: str):
    """Global safe print used by the orchestrator, the verifier and main"""
    try:
        print(to_ascii(text))
    except Exception:
        print("[Message with encoding issues - unable to display]")
