# headcount - privacy-preserving crowd-flow counting
