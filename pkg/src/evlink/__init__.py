"""evlink: event-camera optical link simulator and offline demodulator.

Models an LED OOK transmitter (with microcontroller timing jitter), a
free-space channel, and an event-based vision sensor, and recovers the bit
stream with toggle demodulation plus an optional DPLL for timing recovery.
"""

from .channel import ChannelConfig, ReceivedIrradiance, apply_channel, contrast_ratio
from .demod import (
    DemodConfig,
    DpllState,
    PeakList,
    RoI,
    bin_events,
    crop_roi,
    demodulate,
    detect_peaks,
    dpll_track,
    sample_toggle_state,
    smooth,
    toggle_demodulate,
)
from .harness import (
    BerResult,
    LinkConfig,
    aggregate,
    compute_ber,
    net_rate,
    passes_hdfec,
    run_link,
    run_trial,
    sweep,
    synthetic_peak_trial,
)
from .line_coding import (
    AlignmentError,
    CodeGroup,
    Frame,
    align_and_extract,
    decode_8b10b,
    encode_8b10b,
    encode_byte,
    frame_payload,
)
from .sensor import (
    ArraySpread,
    PixelParams,
    frequency_response,
    simulate_array,
    simulate_pixel,
    square_wave,
)
from .signals import (
    NEG,
    OFF,
    ON,
    POS,
    BitStream,
    ConfigError,
    CsvFormatError,
    Event,
    EventHistogram,
    EventStream,
    OpticalWaveform,
    SampledSignal,
    merge_streams,
    read_events_csv,
    sample_waveform,
    write_events_csv,
)
from .transmitter import TxConfig, modulate_ook

__version__ = "0.1.0"
