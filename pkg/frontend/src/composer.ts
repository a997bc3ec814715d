/** Alert composer wiring: the live character counter and draft assembly. */

import { clampCodePoints, counterText, SHORT_TEXT_LIMIT, type AlertDraftFields } from "./validation";
import type { Geofence } from "./types";

/** Hard-stop the warning text at the limit and keep the counter live.
 * Clamping is by code points, so multi-byte text gets full capacity. */
export function wireShortTextInput(
  input: HTMLInputElement | HTMLTextAreaElement,
  counter: HTMLElement,
): void {
  const sync = () => {
    const clamped = clampCodePoints(input.value, SHORT_TEXT_LIMIT);
    if (clamped !== input.value) input.value = clamped;
    counter.textContent = counterText(input.value);
  };
  input.addEventListener("input", sync);
  sync();
}

export interface ComposerElements {
  hazard: HTMLSelectElement;
  severity: HTMLSelectElement;
  shortText: HTMLInputElement | HTMLTextAreaElement;
  guidance: HTMLTextAreaElement;
  authority: HTMLInputElement;
  durationHours: HTMLInputElement;
}

export function readDraft(el: ComposerElements, area: Geofence | null, nowS: number): AlertDraftFields {
  const hours = Number(el.durationHours.value) || 1;
  return {
    hazard: el.hazard.value,
    severity: el.severity.value,
    short_text: el.shortText.value,
    guidance_text: el.guidance.value,
    authority: el.authority.value,
    effective_from: nowS,
    expires_at: nowS + hours * 3600,
    area,
  };
}
