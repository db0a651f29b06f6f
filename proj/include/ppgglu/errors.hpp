#ifndef PPGGLU_ERRORS_HPP
#define PPGGLU_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ppgglu {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define PPGGLU_DEFINE_ERROR(Name)                                  \
  struct Name : Error {                                            \
    explicit Name(const std::string& msg)                          \
        : Error(std::string(#Name) + ": " + msg) {}                \
  }

// tensor / autograd
PPGGLU_DEFINE_ERROR(ShapeMismatch);
PPGGLU_DEFINE_ERROR(InvalidKernel);
PPGGLU_DEFINE_ERROR(InvalidInput);
PPGGLU_DEFINE_ERROR(InvalidBatch);
PPGGLU_DEFINE_ERROR(NotScalar);
PPGGLU_DEFINE_ERROR(MissingGradient);
PPGGLU_DEFINE_ERROR(EmptyInput);

// signal processing
PPGGLU_DEFINE_ERROR(NyquistViolation);
PPGGLU_DEFINE_ERROR(SignalTooShort);
PPGGLU_DEFINE_ERROR(DegenerateSignal);
PPGGLU_DEFINE_ERROR(InvalidRate);
PPGGLU_DEFINE_ERROR(InvalidSigma);

// dataset
PPGGLU_DEFINE_ERROR(MissingFile);
PPGGLU_DEFINE_ERROR(MalformedCsv);
PPGGLU_DEFINE_ERROR(LabelOutOfRange);
PPGGLU_DEFINE_ERROR(InvalidBins);
PPGGLU_DEFINE_ERROR(TooFewSamples);

// model
PPGGLU_DEFINE_ERROR(InvalidConfig);
PPGGLU_DEFINE_ERROR(Io);
PPGGLU_DEFINE_ERROR(FormatVersionMismatch);
PPGGLU_DEFINE_ERROR(ChecksumMismatch);

// training
PPGGLU_DEFINE_ERROR(EmptySplit);
PPGGLU_DEFINE_ERROR(NonFiniteLoss);

// evaluation
PPGGLU_DEFINE_ERROR(ZeroReference);
PPGGLU_DEFINE_ERROR(ConstantReference);
PPGGLU_DEFINE_ERROR(OutOfPhysiologicalRange);
PPGGLU_DEFINE_ERROR(UnsupportedFormat);

#undef PPGGLU_DEFINE_ERROR

}  // namespace ppgglu

#endif  // PPGGLU_ERRORS_HPP
